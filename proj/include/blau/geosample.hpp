#pragma once
// Population-weighted rejection sampling of home locations inside polygon
// regions, and ordinal coding of distances between locations.
//
// Coordinates are planar and must already be projected; regions are unions of
// simple rings without holes.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "blau/random.hpp"

namespace blau {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

double distance(Point a, Point b);

using Ring = std::vector<Point>;

/// Signed shoelace area (positive for counter-clockwise rings).
double signed_area(const Ring& ring);
bool ring_is_simple(const Ring& ring);
/// Even-odd crossing test.
bool point_in_ring(Point p, const Ring& ring);

struct PolygonRegion {
    std::string id;
    std::vector<Ring> rings;
    double population = 0.0;

    double area() const;
    void validate() const;
};

struct DistanceBins {
    std::vector<double> thresholds{1.0, 5.0, 50.0};

    void validate() const;
    int levels() const { return static_cast<int>(thresholds.size()) + 1; }
};

/// 1 + number of thresholds strictly below the distance (levels 1..|bins|+1).
int ordinal_level(double distance, const DistanceBins& bins);
int ordinal_distance(Point a, Point b, const DistanceBins& bins);

struct SampledLocation {
    std::size_t region = 0;  // index into the region list
    Point point;
};

/// Picks a region with probability proportional to population, a ring of that
/// region proportional to area, then a uniform point in the ring by bounding
/// box rejection.
class LocationSampler {
public:
    explicit LocationSampler(std::vector<PolygonRegion> regions);

    SampledLocation sample(Rng& rng);

    const std::vector<PolygonRegion>& regions() const { return regions_; }
    std::uint64_t proposals() const { return proposals_; }
    std::uint64_t accepted() const { return accepted_; }
    double acceptance_rate() const;

private:
    struct Box {
        double x0, y0, x1, y1;
    };
    std::vector<PolygonRegion> regions_;
    std::vector<double> region_cdf_;
    std::vector<std::vector<double>> ring_cdf_;
    std::vector<std::vector<Box>> boxes_;
    std::uint64_t proposals_ = 0;
    std::uint64_t accepted_ = 0;
};

/// Returns (region id, point) for one draw.
std::pair<std::string, Point> sample_location(const std::vector<PolygonRegion>& regions,
                                              std::uint64_t seed);

/// Ordinal distance levels between `count` pairs of independently sampled locations.
std::vector<int> sample_control_distance_feature(const std::vector<PolygonRegion>& regions,
                                                 const DistanceBins& bins, std::size_t count,
                                                 std::uint64_t seed);

/// One region per line, JSON object:
///   {"id": "A", "population": 1500, "rings": [[[x, y], [x, y], ...], ...]}
/// Blank lines and lines starting with '#' are skipped.
std::vector<PolygonRegion> parse_regions(std::istream& in);
std::vector<PolygonRegion> load_regions(const std::string& path);

}  // namespace blau
