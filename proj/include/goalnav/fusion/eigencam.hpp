#pragma once

#include "goalnav/nn/tensor.hpp"
#include "goalnav/world/render.hpp"

namespace goalnav::fusion {

/// Saliency of a C x H x W activation: rows of the centred (H*W) x C matrix
/// projected on its first right singular vector, min-max scaled to [0, 1].
/// The vector is oriented to agree with the uncentred column sums. Constant
/// activations give an all-zero H x W map. Throws NumericalError on
/// non-finite input.
template <typename T>
nn::Tensor eigencam(const nn::BasicTensor<T>& activation);

/// Bilinearly upsamples a heatmap to the image size and blends a
/// blue-to-red colour ramp over the image.
world::RGBImage overlay_heatmap(const world::RGBImage& image, const nn::Tensor& heatmap, float alpha = 0.5f);

}  // namespace goalnav::fusion
