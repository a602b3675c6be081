#include "echomil/sampling.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <random>

#include "echomil/errors.hpp"

namespace echomil {

std::vector<int> FrameIndexCollection::resolve(int num_frames) const {
  if (num_frames < 1) throw ArgumentError("video has no frames");
  std::vector<int> out;
  out.reserve(indices.size());
  for (int i : indices) {
    if (i < 0) throw ArgumentError("negative frame index in collection");
    out.push_back(std::min(i, num_frames - 1));
  }
  return out;
}

BlockPartition partition_blocks(int num_frames, int n_blocks) {
  if (num_frames < 1) throw ArgumentError("partition needs at least one frame");
  if (n_blocks < 1) throw ArgumentError("partition needs at least one block");
  BlockPartition p;
  p.num_frames = num_frames;
  p.num_blocks = n_blocks;
  p.block_size = (num_frames + n_blocks - 1) / n_blocks;
  p.num_frames_padded = p.block_size * n_blocks;
  if (num_frames < n_blocks) {
    spdlog::warn("video has {} frames but {} blocks were requested; trailing blocks repeat frame {}",
                 num_frames, n_blocks, num_frames - 1);
  }
  p.boundaries.reserve(n_blocks);
  for (int b = 0; b < n_blocks; ++b) {
    p.boundaries.push_back({b * p.block_size, (b + 1) * p.block_size});
  }
  return p;
}

FrameIndexCollection block_random_select(const BlockPartition& partition, std::uint64_t rng_seed) {
  std::mt19937_64 rng(rng_seed);
  FrameIndexCollection c;
  c.origin = CollectionOrigin::training_random;
  c.indices.reserve(partition.boundaries.size());
  for (const auto& block : partition.boundaries) {
    std::uniform_int_distribution<int> pick(block.begin, block.end - 1);
    c.indices.push_back(pick(rng));
  }
  return c;
}

FrameIndexCollection block_first_select(const BlockPartition& partition) {
  FrameIndexCollection c;
  c.origin = CollectionOrigin::training_fixed;
  c.offset = 0;
  for (const auto& block : partition.boundaries) c.indices.push_back(block.begin);
  return c;
}

namespace {

FrameIndexCollection offset_collection(const BlockPartition& partition, int offset) {
  FrameIndexCollection c;
  c.origin = CollectionOrigin::inference_offset;
  c.offset = offset;
  c.indices.reserve(partition.boundaries.size());
  for (const auto& block : partition.boundaries) c.indices.push_back(block.begin + offset);
  return c;
}

}  // namespace

std::vector<FrameIndexCollection> block_inference_collections(const BlockPartition& partition) {
  std::vector<FrameIndexCollection> out;
  out.reserve(partition.block_size);
  for (int o = 0; o < partition.block_size; ++o) out.push_back(offset_collection(partition, o));
  return out;
}

FrameIndexCollection block_middle_collection(const BlockPartition& partition) {
  return offset_collection(partition, partition.block_size / 2);
}

Label maximal_agreement_decision(std::span<const Label> votes) {
  if (votes.empty()) throw ArgumentError("maximal agreement decision needs at least one vote");
  std::size_t positive = 0;
  for (Label v : votes) positive += v == Label::positive ? 1 : 0;
  const std::size_t negative = votes.size() - positive;
  return positive >= negative ? Label::positive : Label::negative;
}

bool is_valid_collection(const FrameIndexCollection& collection, const BlockPartition& partition) {
  if (collection.indices.size() != partition.boundaries.size()) return false;
  for (std::size_t b = 0; b < collection.indices.size(); ++b) {
    if (!partition.boundaries[b].contains(collection.indices[b])) return false;
    if (b > 0 && collection.indices[b] <= collection.indices[b - 1]) return false;
  }
  return true;
}

}  // namespace echomil
