#pragma once

#include <vector>

#include "wildfire/nn/graph.hpp"

namespace wildfire::nn {

// x [N,Ci,H,W], weight [Co,Ci,k,k], bias [Co] or null -> [N,Co,Ho,Wo].
template <typename S>
Var<S> conv2d(const Var<S>& x, const Var<S>& weight, const Var<S>& bias, int stride, int padding);

template <typename S>
Var<S> relu(const Var<S>& x);

template <typename S>
Var<S> add(const Var<S>& a, const Var<S>& b);

// Concatenates two [N,*,H,W] tensors along channels.
template <typename S>
Var<S> concat_channels(const Var<S>& a, const Var<S>& b);

// Concatenates [N,C,H,W] tensors along channels.
template <typename S>
Var<S> concat_channels(const std::vector<Var<S>>& parts);

template <typename S>
Var<S> upsample_nearest(const Var<S>& x, int factor);

// Adds a per-sample, per-channel constant offsets [N,C] to x [N,C,H,W].
template <typename S>
Var<S> add_channel_offsets(const Var<S>& x, const Tensor<S>& offsets);

// Single-head self-attention inside non-overlapping window x window tiles.
// q, k, v are [N,D,H,W]; window must divide H and W.
template <typename S>
Var<S> window_attention(const Var<S>& q, const Var<S>& k, const Var<S>& v, int window);

// keys [N,heads*dk,h,w], queries [heads,dk] -> scaled dot products [N,heads,h,w].
template <typename S>
Var<S> head_scores(const Var<S>& keys, const Var<S>& queries);

// Softmax across the list (time) of [N,heads,h,w] scores -> [T,N,heads,h,w].
template <typename S>
Var<S> temporal_softmax(const std::vector<Var<S>>& scores);

// Weighted temporal sum of T feature maps [N,C,hs,ws] with a [T,N,heads,h,w]
// mask, nearest-upsampled by hs/h. Channel c uses head c / (C / heads).
template <typename S>
Var<S> temporal_pool(const std::vector<Var<S>>& features, const Var<S>& mask);

// [N,C,H,W] -> [N,C]
template <typename S>
Var<S> global_avg_pool(const Var<S>& x);

// Wraps an externally computed scalar whose gradient with respect to
// `input` is already known.
template <typename S>
Var<S> external_scalar(const Var<S>& input, S value, Tensor<S> gradient);

}  // namespace wildfire::nn
