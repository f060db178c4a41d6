#pragma once

// Memorization screening: every generated sample is compared against every
// training signature with a blurred RMS distance.

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "colsig/blur.hpp"
#include "colsig/error.hpp"
#include "colsig/grid.hpp"

namespace colsig {

/// Sigma-1 Gaussian blur of an image (constants are preserved).
inline std::vector<double> gaussian_blur(const RasterImage& img, double sigma = 1.0) {
    return gaussian_blur(std::vector<double>(img.data.begin(), img.data.end()), img.width, img.height, sigma);
}

inline double blurred_rms(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(a.size()));
}

/// RMS difference of the sigma=1 blurred images; in [0,1] for unit-range inputs.
inline double image_distance(const RasterImage& a, const RasterImage& b) {
    require(a.same_shape(b), ErrorKind::Shape, "image_distance needs images on the same canvas");
    return blurred_rms(gaussian_blur(a), gaussian_blur(b));
}

/// Training signatures with their blurred renderings cached.
class TrainingIndex {
public:
    void add(std::string source_id, const RasterImage& img) {
        if (!ids_.empty())
            require(img.width == width_ && img.height == height_, ErrorKind::Shape, "training images differ in shape");
        width_ = img.width;
        height_ = img.height;
        ids_.push_back(std::move(source_id));
        blurred_.push_back(gaussian_blur(img));
    }
    void add(std::string source_id, const BinaryMask& mask) { add(std::move(source_id), to_intensity(mask)); }

    std::size_t size() const { return ids_.size(); }
    bool empty() const { return ids_.empty(); }
    const std::string& id(std::size_t i) const { return ids_[i]; }
    const std::vector<double>& blurred(std::size_t i) const { return blurred_[i]; }
    int width() const { return width_; }
    int height() const { return height_; }

private:
    std::vector<std::string> ids_;
    std::vector<std::vector<double>> blurred_;
    int width_ = 0;
    int height_ = 0;
};

struct NearestMatch {
    double distance = 0.0;
    std::string source_id;
};

/// Exact minimum over the whole training set; ties keep the earliest item.
inline NearestMatch nearest_training_distance(const RasterImage& sample, const TrainingIndex& training) {
    require(!training.empty(), ErrorKind::Parameter, "training set is empty");
    require(sample.width == training.width() && sample.height == training.height(), ErrorKind::Shape,
            "sample is not on the training canvas");
    const auto b = gaussian_blur(sample);
    NearestMatch best{std::numeric_limits<double>::infinity(), {}};
    for (std::size_t i = 0; i < training.size(); ++i) {
        const double d = blurred_rms(b, training.blurred(i));
        if (d < best.distance) best = {d, training.id(i)};
    }
    return best;
}

struct MemorizationReport {
    std::string sample_id;
    std::string nearest_source_id;
    double distance = 0.0;
    bool flagged = false;
    double threshold = 0.0;
};

struct NamedImage {
    std::string id;
    RasterImage image;
};

/// One report per sample, in input order; flagged iff distance < tau.
inline std::vector<MemorizationReport> screen_batch(const std::vector<NamedImage>& samples,
                                                    const TrainingIndex& training, double tau) {
    require(tau >= 0.0 && tau < 1.0, ErrorKind::Parameter, "tau must lie in [0,1)");
    std::vector<MemorizationReport> out;
    out.reserve(samples.size());
    for (const auto& s : samples) {
        const auto m = nearest_training_distance(s.image, training);
        out.push_back({s.id, m.source_id, m.distance, m.distance < tau, tau});
    }
    return out;
}

inline nlohmann::json to_json(const MemorizationReport& r) {
    return {{"sample_id", r.sample_id}, {"nearest_source_id", r.nearest_source_id}, {"distance", r.distance},
            {"flagged", r.flagged},     {"threshold", r.threshold}};
}

inline MemorizationReport memorization_from_json(const nlohmann::json& j) {
    return {j.at("sample_id").get<std::string>(), j.at("nearest_source_id").get<std::string>(),
            j.at("distance").get<double>(), j.at("flagged").get<bool>(), j.at("threshold").get<double>()};
}

inline nlohmann::json to_json(const std::vector<MemorizationReport>& reports) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& r : reports) a.push_back(to_json(r));
    return a;
}

} // namespace colsig
