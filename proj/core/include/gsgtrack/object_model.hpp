#pragma once

#include "gsgtrack/camera.hpp"
#include "gsgtrack/entropy_sampler.hpp"
#include "gsgtrack/gaussian.hpp"
#include "gsgtrack/se3.hpp"

#include <vector>

namespace gsg {

struct ObjectModel {
  std::vector<Gaussian> gaussians;
  std::vector<int> insertion_epoch;  // frame index each Gaussian was added at

  std::size_t size() const { return gaussians.size(); }
  bool empty() const { return gaussians.empty(); }
  void push_back(const Gaussian& g, int epoch) {
    gaussians.push_back(g);
    insertion_epoch.push_back(epoch);
  }
  // Keeps the entries whose flag is true, preserving order.
  void keep_if(const std::vector<bool>& keep);
};

// Appends one isotropic Gaussian per world-frame sample. The scale is half
// the distance to the nearest other sample of the batch, clipped to
// [1e-4, max_scale]; opacity starts at 0.5.
void insert(ObjectModel& model, const std::vector<PointSample>& samples, int frame_idx,
            double max_scale);

struct MaskReference {
  Pose pose;
  Mask mask;
  Camera cam;
};

// Keep flags of prune_by_mask without modifying the model.
std::vector<bool> mask_consistent(const ObjectModel& model, const std::vector<MaskReference>& refs,
                                  int new_since);

// Removes Gaussians with insertion_epoch >= new_since whose centre lies in
// front of some reference camera and projects outside that reference's mask
// (or outside its image). Returns the number removed.
std::size_t prune_by_mask(ObjectModel& model, const std::vector<MaskReference>& refs,
                          int new_since);

// Picks up to `count` poses greedily maximizing the minimum rotation distance
// to those already picked, starting from the most recent one.
std::vector<std::size_t> rotation_diverse_subset(const std::vector<Pose>& poses,
                                                 std::size_t count);

}  // namespace gsg
