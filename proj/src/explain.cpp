#include "echomil/explain.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>

#include "echomil/errors.hpp"

namespace echomil {

namespace fs = std::filesystem;

HeatmapResult generate_heatmap(VideoClassifier& model, const FrameStack& video) {
  const auto& cfg = model.config();
  const BlockPartition partition = partition_blocks(video.frames, cfg.num_frames);
  std::vector<FrameIndexCollection> collections;
  if (cfg.use_mad) {
    collections = block_inference_collections(partition);
  } else {
    collections.push_back(block_middle_collection(partition));
  }
  const Prediction prediction = predict_video(model, video);
  const auto best = std::max_element(prediction.collection_scores.begin(),
                                     prediction.collection_scores.end()) -
                    prediction.collection_scores.begin();

  HeatmapResult r;
  r.collection = collections[best];
  r.frame_indices = r.collection.resolve(video.frames);
  r.predicted = prediction.final_label;
  r.score = prediction.final_score;
  r.frames = static_cast<int>(r.frame_indices.size());
  r.height = video.height;
  r.width = video.width;

  const Tensor input = frames_to_tensor(video, r.frame_indices, cfg.input_size, cfg.normalization);
  model.zero_grad();
  model.forward(input, 1, nn::Pass::gradient);
  const float seed_grad = 1.0f;
  model.backward({&seed_grad, 1});
  const Tensor& maps = model.final_maps();
  const Tensor& grads = model.final_maps_grad();
  const int channels = maps.c();
  const int mh = maps.h(), mw = maps.w();
  const std::size_t plane = static_cast<std::size_t>(mh) * mw;

  const std::size_t frame_pixels = static_cast<std::size_t>(r.height) * r.width;
  r.heat.assign(frame_pixels * r.frames, 0.0f);
  for (int j = 0; j < r.frames; ++j) {
    cv::Mat cam(mh, mw, CV_32F, cv::Scalar(0));
    for (int c = 0; c < channels; ++c) {
      const float* g = grads.sample(j) + c * plane;
      const float* a = maps.sample(j) + c * plane;
      double weight = 0.0;
      for (std::size_t i = 0; i < plane; ++i) weight += g[i];
      weight /= static_cast<double>(plane);
      auto* out = cam.ptr<float>();
      for (std::size_t i = 0; i < plane; ++i) out[i] += static_cast<float>(weight * a[i]);
    }
    cv::max(cam, 0.0, cam);
    cv::Mat up(r.height, r.width, CV_32F, r.heat.data() + j * frame_pixels);
    cv::resize(cam, up, up.size(), 0, 0, cv::INTER_LINEAR);
  }
  model.zero_grad();

  const float peak = r.heat.empty() ? 0.0f : *std::max_element(r.heat.begin(), r.heat.end());
  if (peak < 1e-12f) {
    std::fill(r.heat.begin(), r.heat.end(), 0.0f);
  } else {
    for (auto& v : r.heat) v = std::clamp(v / peak, 0.0f, 1.0f);
  }

  r.overlay = FrameStack(r.frames, r.height, r.width);
  for (int j = 0; j < r.frames; ++j) {
    cv::Mat heat8;
    cv::Mat(r.height, r.width, CV_32F, r.heat.data() + j * frame_pixels)
        .convertTo(heat8, CV_8U, 255.0);
    cv::Mat color;
    cv::applyColorMap(heat8, color, cv::COLORMAP_JET);
    cv::cvtColor(color, color, cv::COLOR_BGR2RGB);
    const cv::Mat frame(r.height, r.width, CV_8UC3,
                        const_cast<std::uint8_t*>(video.frame(r.frame_indices[j])));
    cv::Mat blended(r.height, r.width, CV_8UC3, r.overlay.frame(j));
    cv::addWeighted(color, kOverlayAlpha, frame, 1.0 - kOverlayAlpha, 0.0, blended);
  }
  return r;
}

void write_heatmap(const HeatmapResult& result, const std::string& video_id,
                   const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (!fs::is_directory(out_dir)) throw IoError("cannot create '" + out_dir.string() + "'");
  cv::Mat bgr;
  for (int j = 0; j < result.frames; ++j) {
    const cv::Mat rgb(result.height, result.width, CV_8UC3,
                      const_cast<std::uint8_t*>(result.overlay.frame(j)));
    cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
    const fs::path file = out_dir / (video_id + "_frame" + std::to_string(j) + ".png");
    if (!cv::imwrite(file.string(), bgr)) throw IoError("cannot write '" + file.string() + "'");
  }
  write_video(result.overlay, out_dir / (video_id + "_heatmap.avi"));
}

}  // namespace echomil
