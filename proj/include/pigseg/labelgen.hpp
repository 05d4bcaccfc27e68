#pragma once

#include <utility>
#include <vector>

#include "pigseg/geometry.hpp"
#include "pigseg/image.hpp"

namespace pigseg {

/// Annotated scene: ellipses in annotation order (instance id = position
/// + 1); painting order is by increasing depth rank so nearer animals
/// overwrite covered ones.
struct Scene {
  int width = 0;
  int height = 0;
  std::vector<Ellipse> ellipses;
};

bool is_valid(const Scene& s);
void require_valid(const Scene& s);

Scene read_scene_json(const std::string& path);
void write_scene_json(const std::string& path, const Scene& s);

/// Foreground = union of all ellipses.
LabelImage render_binary(const Scene& s);

/// Instance id k = k-th annotated ellipse; depth overwrite applies.
LabelImage render_instance(const Scene& s);

/// Classes: 1 = outer edge, 2 = inner core (the ellipse scaled by
/// core_factor). Requires 0 < core_factor < 1.
LabelImage render_categorical(const Scene& s, double core_factor);

/// Classes: 1 = body, 2 = head. The head is the cap of the ellipse whose
/// projection onto the directed major axis exceeds (1 - 2*head_fraction)*a.
/// Every ellipse must have a known head_sign.
LabelImage render_bodypart(const Scene& s, double head_fraction);

using PixelSet = std::vector<std::pair<int, int>>;

/// 4-connected components of pixels carrying target_class, in scan
/// discovery order; pixels within each component are row-major.
std::vector<PixelSet> blob_search(const LabelImage& li, uint16_t target_class);

/// Sub-pixel boundary samples of a pixel region: midpoints between each
/// region pixel and its 4-neighbors outside the region (image borders
/// count as outside). These trace the region outline to within half a
/// pixel and are the input for region-level ellipse fits.
std::vector<std::pair<double, double>> region_boundary_points(const PixelSet& region,
                                                              int width, int height);

struct ExtractedEllipse {
  int instance_id = 0;
  Ellipse ellipse;
};

struct GtExtraction {
  std::vector<ExtractedEllipse> ellipses;
  std::vector<int> skipped_ids;  // too few pixels or failed fits
};

/// Occlusion-adjusted ground-truth ellipses: per visible instance region,
/// fit an ellipse through the region boundary. Instances below min_pixels
/// or with degenerate fits are skipped and reported. When the source
/// scene is given, head_sign is transferred from the matching annotation
/// (the fitted axis is aligned with the annotated directed orientation).
GtExtraction extract_gt_ellipses(const LabelImage& instance_image, int min_pixels = 10);
GtExtraction extract_gt_ellipses(const LabelImage& instance_image, const Scene& source,
                                 int min_pixels = 10);

struct CategoricalExtraction {
  std::vector<Ellipse> ellipses;
  int skipped_blobs = 0;  // below min_pixels or failed fits
};

/// Blob search on the inner-core class, ellipse fit per blob, scaled back
/// up by 1/core_factor.
CategoricalExtraction ellipses_from_categorical(const LabelImage& categorical,
                                                double core_factor, int min_pixels = 10);

}  // namespace pigseg
