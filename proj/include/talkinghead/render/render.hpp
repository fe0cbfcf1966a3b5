#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "talkinghead/face3d/types.hpp"
#include "talkinghead/io/image.hpp"

namespace th::render {

/// Pixel (x, y) covers [x, x+1) x [y, y+1); samples are taken at its centre.
struct RenderedFrame {
  Image image;                        // black outside the face
  std::vector<std::uint8_t> mask;     // 1 where a triangle covers the pixel centre
  std::vector<double> depth;          // camera-space z, +inf where uncovered
  face3d::Pose pose;

  [[nodiscard]] bool covered(int x, int y) const {
    return mask[static_cast<std::size_t>(y) * image.width + x] != 0;
  }
  [[nodiscard]] std::size_t coverage() const;
};

struct BackgroundPlate {
  Image image;
  int source_index = -1;
  face3d::Pose source_pose;
};

/// Z-buffered rasterization with per-vertex SH colours (camera-space normals),
/// interpolated with screen-space barycentrics; depth is interpolated perspective-correctly.
RenderedFrame rasterize(const face3d::FaceMesh& mesh, const face3d::Pose& pose, const face3d::Camera& camera,
                        std::span<const double> gamma);

struct AlbedoResult {
  face3d::VertexMatrix albedo;  // V x 3
  std::vector<bool> visible;    // vertices sampled from the frame
  int selected_frame = -1;
};

/// Index minimizing |beta| + |angles|; ties go to the earlier frame.
int select_neutral_frame(std::span<const face3d::CoefficientSet> coefficients);

/// Per-vertex albedo sampled from the most neutral frame with the SH shading divided out.
/// Vertices that are hidden, back-facing or near the silhouette keep the low-frequency albedo.
AlbedoResult extract_detailed_albedo(std::span<const Image> frames,
                                     std::span<const face3d::CoefficientSet> coefficients,
                                     const face3d::FaceBasis& basis, const face3d::Camera& camera);

/// Bilinear sample at continuous image coordinates (pixel centres at +0.5).
Eigen::Vector3d sample_bilinear(const Image& image, double u, double v);

/// Frames that are the extreme value of some Euler angle inside the centred window
/// [i - window/2, i + window/2] (first index among ties, flat windows ignored),
/// plus the first and last frame. Sorted, unique.
std::vector<int> select_keyframes(std::span<const face3d::Pose> poses, int window);

struct PoseDistanceWeights {
  double angle = 1.0;         // per squared degree
  double translation = 0.1;   // per squared model unit
};

double pose_distance_sq(const face3d::Pose& a, const face3d::Pose& b, const PoseDistanceWeights& w = {});

/// Nearest input frame by pose; ties resolve to the smaller index.
int match_background_index(const face3d::Pose& query, std::span<const face3d::Pose> candidates,
                           const PoseDistanceWeights& w = {});
BackgroundPlate match_background(const face3d::Pose& query, std::span<const Image> frames,
                                 std::span<const face3d::Pose> poses, const PoseDistanceWeights& w = {});

struct InterpolationWeight {
  int key_a = 0;  // position in the keyframe list
  int key_b = 0;
  double weight = 0.0;  // 0 at key_a, 1 at key_b
};

/// Piecewise-linear weights between consecutive keyframes; frames outside the key range clamp.
std::vector<InterpolationWeight> interpolation_weights(std::span<const int> keyframes, int frame_count);

struct InterpolatedFrame {
  Image background;
  face3d::Pose background_pose;  // pose interpolated between the key plates
  face3d::Pose pose;             // render pose after blending towards background_pose
};

/// keyframes[k] is the frame index that plates[k] belongs to.
/// Render pose = (1 - blend) * predicted + blend * interpolated background pose.
std::vector<InterpolatedFrame> interpolate_backgrounds(std::span<const int> keyframes,
                                                       std::span<const BackgroundPlate> plates,
                                                       std::span<const face3d::Pose> predicted, double blend = 0.5);

/// Face pixels from the render, the rest from the background.
Image composite(const RenderedFrame& rendered, const Image& background);

void write_pose_csv(const std::string& path, std::span<const face3d::Pose> poses);
std::vector<face3d::Pose> read_pose_csv(const std::string& path);

}  // namespace th::render
