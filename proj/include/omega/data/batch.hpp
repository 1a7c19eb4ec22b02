#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "omega/data/series.hpp"
#include "omega/data/window.hpp"
#include "omega/error.hpp"
#include "omega/numerics/tensor.hpp"
#include "omega/util/rng.hpp"

namespace omega::data {

inline std::vector<WindowIndex> sliding_windows(const SeriesView& series, std::size_t W,
                                                std::size_t H, std::size_t S) {
  return sliding_windows(series.size(), W, H, S);
}

struct BatchItem {
  std::size_t series = 0;
  std::size_t offset = 0;

  friend bool operator==(const BatchItem&, const BatchItem&) = default;
};

/// Model-ready batch. Inputs are patch rows [B*n x l_patch]; forecast targets
/// [B x l_pred] use each context's own min/max map and are not clipped;
/// reconstruction targets [B x W] equal the normalized inputs.
struct Batch {
  std::size_t size = 0;
  std::size_t n = 0;
  std::size_t l_patch = 0;
  std::size_t l_pred = 0;
  numerics::Tensor inputs;
  numerics::Tensor forecast_targets;
  numerics::Tensor reconstruction_targets;
  std::vector<BatchItem> items;
  std::vector<ContextWindow> contexts;
};

/// Builds a batch from explicit (series, offset) windows of length W + H.
inline Batch assemble_batch(std::span<const SeriesView> pool, std::span<const BatchItem> items,
                            std::size_t W, std::size_t H, std::size_t l_patch) {
  if (items.empty()) throw ValidationError("a batch needs at least one window");
  if (l_patch == 0 || W % l_patch != 0) {
    throw DivisibilityError("window length " + std::to_string(W) +
                            " is not a multiple of patch length " + std::to_string(l_patch));
  }
  const std::size_t B = items.size();
  Batch batch;
  batch.size = B;
  batch.n = W / l_patch;
  batch.l_patch = l_patch;
  batch.l_pred = H;
  batch.inputs = numerics::Tensor({B * batch.n, l_patch});
  batch.forecast_targets = numerics::Tensor({B, H});
  batch.reconstruction_targets = numerics::Tensor({B, W});
  batch.items.assign(items.begin(), items.end());
  batch.contexts.reserve(B);
  for (std::size_t b = 0; b < B; ++b) {
    const SeriesView& s = pool[items[b].series];
    const auto samples = s.read(items[b].offset, W + H);
    ContextWindow ctx = minmax_normalize(samples.first(W), items[b].offset);
    const PatchSequence patches = segment_patches(ctx, l_patch);
    for (std::size_t i = 0; i < W; ++i) {
      const auto v = static_cast<float>(patches.flat()[i]);
      batch.inputs[b * W + i] = v;
      batch.reconstruction_targets[b * W + i] = v;
    }
    for (std::size_t h = 0; h < H; ++h) {
      batch.forecast_targets[b * H + h] = static_cast<float>(ctx.apply(samples[W + h]));
    }
    batch.contexts.push_back(std::move(ctx));
  }
  return batch;
}

/// Samples B windows uniformly over every admissible (series, offset) pair.
inline Batch make_batch(std::span<const SeriesView> pool, std::size_t B, std::size_t W,
                        std::size_t H, std::size_t l_patch, std::uint64_t seed) {
  if (B == 0) throw ValidationError("batch size must be positive");
  std::vector<std::uint64_t> cumulative;
  cumulative.reserve(pool.size());
  std::uint64_t total = 0;
  for (const auto& s : pool) {
    if (s.size() >= W + H) total += s.size() - (W + H) + 1;
    cumulative.push_back(total);
  }
  if (total == 0) {
    throw InsufficientDataError("no series admits a window of " + std::to_string(W + H) +
                                    " samples",
                                W + H);
  }
  util::Rng rng(seed);
  std::uniform_int_distribution<std::uint64_t> pick(0, total - 1);
  std::vector<BatchItem> items(B);
  for (auto& item : items) {
    const std::uint64_t r = pick(rng);
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), r);
    item.series = static_cast<std::size_t>(it - cumulative.begin());
    const std::uint64_t before = item.series == 0 ? 0 : cumulative[item.series - 1];
    item.offset = static_cast<std::size_t>(r - before);
  }
  return assemble_batch(pool, items, W, H, l_patch);
}

}  // namespace omega::data
