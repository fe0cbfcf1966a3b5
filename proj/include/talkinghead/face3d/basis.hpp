#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "talkinghead/face3d/types.hpp"

namespace th::face3d {

struct SyntheticBasisConfig {
  int subdivisions = 3;  // icosphere level; 3 gives 642 vertices
  BasisDims dims{};
  int smoothing_iterations = 30;
  std::uint64_t seed = 20200708;
};

/// Unit-sphere head with smooth, orthonormal identity/expression/texture modes.
/// Expression modes are concentrated around the mouth region.
FaceBasis make_synthetic_basis(const SyntheticBasisConfig& config = {});

/// Icosphere vertex positions (unit sphere) and triangles with outward winding.
void icosphere(int subdivisions, VertexMatrix& vertices, std::vector<Triangle>& triangles);

/// Model-space direction of the mouth centre; the face looks towards -z.
Eigen::Vector3d mouth_direction();

/// The `count` vertices of the mean shape closest to the mouth direction.
std::vector<int> mouth_landmark_indices(const FaceBasis& basis, int count = 20);

/// Front-hemisphere vertices spread over the face, used as fitting landmarks.
std::vector<int> face_landmark_indices(const FaceBasis& basis, int count = 68);

/// Container kind "face_basis": arrays mean_shape, mean_texture, basis_id, basis_exp,
/// basis_tex (3V x D, row-major f32) and triangles (F x 3 i32).
void save_basis(const FaceBasis& basis, const std::string& path);
FaceBasis load_basis(const std::string& path);

/// ASCII OBJ; per-vertex colours are carried in "#vc r g b" comment lines.
void export_obj(const FaceMesh& mesh, const std::string& path);

}  // namespace th::face3d
