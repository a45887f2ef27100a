#pragma once

// Procedural 8x8 binary sprites: a 2x2 square at grid position (x, y) with
// x, y in {0..6}. 49 distinct images with two known generative factors.

#include <cstdint>
#include <random>

#include "controlvae/vae.hpp"

namespace controlvae {

class SpriteDataset {
 public:
  static constexpr int kSide = 8;
  static constexpr int kSquare = 2;
  static constexpr int kPositions = kSide - kSquare + 1;
  static constexpr int kImages = kPositions * kPositions;
  static constexpr int kPixels = kSide * kSide;

  SpriteDataset() : images_(Matrix::Zero(kImages, kPixels)) {
    for (int y = 0; y < kPositions; ++y)
      for (int x = 0; x < kPositions; ++x)
        for (int dy = 0; dy < kSquare; ++dy)
          for (int dx = 0; dx < kSquare; ++dx) images_(index(x, y), (y + dy) * kSide + (x + dx)) = 1.0;
  }

  static int index(int x, int y) { return y * kPositions + x; }

  const Matrix& images() const { return images_; }

  /// Uniformly sampled images plus standard-normal reparameterization noise.
  template <class Rng>
  Batch sample(Rng& rng, int batch_size, int latent_dim) const {
    std::uniform_int_distribution<int> pick(0, kImages - 1);
    std::normal_distribution<double> normal(0.0, 1.0);
    Batch b{Matrix(batch_size, kPixels), Matrix(batch_size, latent_dim)};
    for (int i = 0; i < batch_size; ++i) b.data.row(i) = images_.row(pick(rng));
    for (Eigen::Index i = 0; i < b.noise.size(); ++i) b.noise.data()[i] = normal(rng);
    return b;
  }

 private:
  Matrix images_;
};

}  // namespace controlvae
