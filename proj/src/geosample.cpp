#include "blau/geosample.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>

#include <json.hpp>

#include "blau/errors.hpp"

namespace blau {

double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

double signed_area(const Ring& ring) {
    double twice = 0.0;
    for (std::size_t i = 0, n = ring.size(); i < n; ++i) {
        const Point& a = ring[i];
        const Point& b = ring[(i + 1) % n];
        twice += a.x * b.y - b.x * a.y;
    }
    return 0.5 * twice;
}

namespace {

double cross(Point o, Point a, Point b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

bool on_segment(Point p, Point a, Point b) {
    return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
           p.y <= std::max(a.y, b.y);
}

bool segments_intersect(Point a, Point b, Point c, Point d) {
    double d1 = cross(c, d, a), d2 = cross(c, d, b), d3 = cross(a, b, c), d4 = cross(a, b, d);
    if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0)))
        return true;
    if (d1 == 0 && on_segment(a, c, d)) return true;
    if (d2 == 0 && on_segment(b, c, d)) return true;
    if (d3 == 0 && on_segment(c, a, b)) return true;
    if (d4 == 0 && on_segment(d, a, b)) return true;
    return false;
}

}  // namespace

bool ring_is_simple(const Ring& ring) {
    const std::size_t n = ring.size();
    if (n < 3) return false;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            // adjacent edges share a vertex
            if (j == i + 1 || (i == 0 && j == n - 1)) continue;
            if (segments_intersect(ring[i], ring[(i + 1) % n], ring[j], ring[(j + 1) % n]))
                return false;
        }
    }
    return true;
}

bool point_in_ring(Point p, const Ring& ring) {
    bool inside = false;
    for (std::size_t i = 0, n = ring.size(), j = n - 1; i < n; j = i++) {
        const Point& a = ring[i];
        const Point& b = ring[j];
        if ((a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x)
            inside = !inside;
    }
    return inside;
}

double PolygonRegion::area() const {
    double total = 0.0;
    for (const auto& r : rings) total += std::abs(signed_area(r));
    return total;
}

void PolygonRegion::validate() const {
    if (!(population >= 0.0) || !std::isfinite(population))
        throw ConfigError("region '" + id + "': population must be non-negative");
    for (const auto& r : rings) {
        if (r.size() < 3) throw ConfigError("region '" + id + "': ring with fewer than 3 vertices");
        for (const auto& p : r)
            if (!std::isfinite(p.x) || !std::isfinite(p.y))
                throw ConfigError("region '" + id + "': non-finite vertex");
        if (!ring_is_simple(r)) throw ConfigError("region '" + id + "': self-intersecting ring");
    }
    if (population > 0.0 && !(area() > 0.0))
        throw ConfigError("region '" + id + "': populated region with zero area");
}

void DistanceBins::validate() const {
    if (thresholds.empty()) throw ConfigError("distance bins: no thresholds");
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
        if (!(thresholds[i] > 0.0)) throw ConfigError("distance bins: thresholds must be positive");
        if (i > 0 && !(thresholds[i] > thresholds[i - 1]))
            throw ConfigError("distance bins: thresholds must be strictly ascending");
    }
}

int ordinal_level(double d, const DistanceBins& bins) {
    int level = 1;
    for (double t : bins.thresholds)
        if (t < d) ++level;
    return level;
}

int ordinal_distance(Point a, Point b, const DistanceBins& bins) {
    return ordinal_level(distance(a, b), bins);
}

namespace {

std::vector<double> cumulative(std::span<const double> w) {
    std::vector<double> cdf(w.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) cdf[i] = (acc += w[i]);
    return cdf;
}

std::size_t pick(const std::vector<double>& cdf, Rng& rng) {
    const double u = uniform_open(rng) * cdf.back();
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    auto idx = static_cast<std::size_t>(it - cdf.begin());
    return std::min(idx, cdf.size() - 1);
}

}  // namespace

LocationSampler::LocationSampler(std::vector<PolygonRegion> regions) : regions_(std::move(regions)) {
    std::vector<double> pops;
    for (const auto& r : regions_) {
        r.validate();
        pops.push_back(r.population);
        std::vector<double> areas;
        std::vector<Box> boxes;
        for (const auto& ring : r.rings) {
            areas.push_back(std::abs(signed_area(ring)));
            Box b{ring[0].x, ring[0].y, ring[0].x, ring[0].y};
            for (const auto& p : ring) {
                b.x0 = std::min(b.x0, p.x);
                b.y0 = std::min(b.y0, p.y);
                b.x1 = std::max(b.x1, p.x);
                b.y1 = std::max(b.y1, p.y);
            }
            boxes.push_back(b);
        }
        ring_cdf_.push_back(areas.empty() ? std::vector<double>{} : cumulative(areas));
        boxes_.push_back(std::move(boxes));
    }
    region_cdf_ = cumulative(pops);
    if (region_cdf_.empty() || !(region_cdf_.back() > 0.0))
        throw ConfigError("location sampler: all region populations are zero");
}

SampledLocation LocationSampler::sample(Rng& rng) {
    const std::size_t r = pick(region_cdf_, rng);
    const std::size_t k = pick(ring_cdf_[r], rng);
    const Ring& ring = regions_[r].rings[k];
    const Box& box = boxes_[r][k];
    std::uniform_real_distribution<double> ux(box.x0, box.x1), uy(box.y0, box.y1);
    for (;;) {
        Point p{ux(rng), uy(rng)};
        ++proposals_;
        if (point_in_ring(p, ring)) {
            ++accepted_;
            return {r, p};
        }
    }
}

double LocationSampler::acceptance_rate() const {
    return proposals_ == 0 ? 0.0 : static_cast<double>(accepted_) / static_cast<double>(proposals_);
}

std::pair<std::string, Point> sample_location(const std::vector<PolygonRegion>& regions,
                                              std::uint64_t seed) {
    LocationSampler sampler(regions);
    Rng rng(seed);
    auto s = sampler.sample(rng);
    return {sampler.regions()[s.region].id, s.point};
}

std::vector<int> sample_control_distance_feature(const std::vector<PolygonRegion>& regions,
                                                 const DistanceBins& bins, std::size_t count,
                                                 std::uint64_t seed) {
    bins.validate();
    LocationSampler sampler(regions);
    Rng rng(seed);
    std::vector<int> levels;
    levels.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Point a = sampler.sample(rng).point;
        Point b = sampler.sample(rng).point;
        levels.push_back(ordinal_distance(a, b, bins));
    }
    return levels;
}

std::vector<PolygonRegion> parse_regions(std::istream& in) {
    std::vector<PolygonRegion> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        try {
            auto j = nlohmann::json::parse(line);
            PolygonRegion r;
            r.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
            r.population = j.at("population").get<double>();
            for (const auto& jr : j.at("rings")) {
                Ring ring;
                for (const auto& v : jr) ring.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
                // tolerate closed rings that repeat the first vertex
                if (ring.size() > 3 && ring.front().x == ring.back().x && ring.front().y == ring.back().y)
                    ring.pop_back();
                r.rings.push_back(std::move(ring));
            }
            r.validate();
            out.push_back(std::move(r));
        } catch (const nlohmann::json::exception& e) {
            throw IoError("regions line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

std::vector<PolygonRegion> load_regions(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open regions file '" + path + "'");
    return parse_regions(in);
}

}  // namespace blau
