#pragma once

#include "cardioquant/image.hpp"

namespace cardioquant {

/// Labels each foreground component with a distinct id >= 1 in first-scan
/// (row-major) encounter order; background stays 0. connectivity is 4 or 8.
LabelMap connected_components(const BinaryMask& mask, int connectivity);

/// Keeps only the largest-area 8-connected component; area ties keep the
/// component with the smallest first-scan label. Empty input stays empty.
BinaryMask largest_component(const BinaryMask& mask);

enum class AxisMethod { moments, chord };

struct VentricleGeometry {
    double area = 0.0;        // foreground pixel count
    double centroid_x = 0.0;  // subpixel
    double centroid_y = 0.0;
    double long_axis = 0.0;   // pixels, >= short_axis
    double short_axis = 0.0;
    double orientation = 0.0;  // radians, long-axis direction
    AxisMethod method = AxisMethod::moments;
    bool empty = true;
};

/// Measures the (single-component) mask.
///   moments: equivalent-ellipse axes, 2 * (2*sqrt(eigenvalue)) of the
///            pixel-center covariance; orientation = 0.5*atan2(2*mu11, mu20-mu02).
///   chord:   long axis = max pairwise contour-pixel distance, short axis =
///            extent perpendicular to the long-axis direction over all
///            foreground pixels.
/// An empty mask yields the empty flag, not an exception.
VentricleGeometry measure_geometry(const BinaryMask& mask, AxisMethod method);

/// Foreground pixels with at least one 4-neighbor background or frame border.
BinaryMask contour_pixels(const BinaryMask& mask);

}  // namespace cardioquant
