#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "echomil/video.hpp"

namespace echomil {

/// Half-open frame range [begin, end).
struct BlockRange {
  int begin = 0;
  int end = 0;
  int size() const { return end - begin; }
  bool contains(int index) const { return index >= begin && index < end; }
};

/// Equal-size blocks over a video padded (at the index level) to a multiple
/// of the block count. Indices past the real length read the last frame.
struct BlockPartition {
  int num_frames = 0;
  int num_frames_padded = 0;
  int num_blocks = 0;
  int block_size = 0;
  std::vector<BlockRange> boundaries;

  /// Maps a padded index onto a real frame.
  int clamp(int index) const { return index < num_frames ? index : num_frames - 1; }
};

enum class CollectionOrigin { training_random, training_fixed, inference_offset };

/// One frame per block, stored as padded indices.
struct FrameIndexCollection {
  std::vector<int> indices;
  CollectionOrigin origin = CollectionOrigin::training_random;
  std::optional<int> offset;

  /// Indices after clamping padding onto the last real frame of a video
  /// with `num_frames` frames.
  std::vector<int> resolve(int num_frames) const;
};

BlockPartition partition_blocks(int num_frames, int n_blocks);

/// Block random selection: one uniformly drawn index per block.
FrameIndexCollection block_random_select(const BlockPartition& partition, std::uint64_t rng_seed);

/// First frame of every block; the training sampler when random selection is off.
FrameIndexCollection block_first_select(const BlockPartition& partition);

/// The K collections at offsets 0..K-1 within each block.
std::vector<FrameIndexCollection> block_inference_collections(const BlockPartition& partition);

/// The single collection at offset K/2.
FrameIndexCollection block_middle_collection(const BlockPartition& partition);

/// Majority label over votes; ties go to +1.
Label maximal_agreement_decision(std::span<const Label> votes);

/// True when the collection honors the one-index-per-block invariants.
bool is_valid_collection(const FrameIndexCollection& collection, const BlockPartition& partition);

}  // namespace echomil
