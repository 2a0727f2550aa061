#pragma once

#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace morphoeval {

enum class CenterScaleMode { per_plate, none };
enum class MadMode { per_plate_controls, per_plate_all, none };
enum class SphereMode { per_batch_controls, none };

// Normalization pipeline described by a config string with four segments
// joined by '-':
//   {csall-plate|nocs} {pcaK|nopca} {madctrl-plate|madall-plate|nomad}
//   {sphctrl-batch|nosph}
// e.g. "csall-plate-pca64-madctrl-plate-nosph".
struct PipelineConfig {
  CenterScaleMode center_scale = CenterScaleMode::per_plate;
  std::optional<int> pca_components = 64;
  MadMode mad = MadMode::per_plate_controls;
  SphereMode sphere = SphereMode::none;
  double epsilon = 1e-6;

  std::string render() const {
    std::ostringstream out;
    out << (center_scale == CenterScaleMode::per_plate ? "csall-plate" : "nocs");
    out << '-';
    if (pca_components) out << "pca" << *pca_components;
    else out << "nopca";
    out << '-';
    switch (mad) {
      case MadMode::per_plate_controls: out << "madctrl-plate"; break;
      case MadMode::per_plate_all: out << "madall-plate"; break;
      case MadMode::none: out << "nomad"; break;
    }
    out << '-';
    out << (sphere == SphereMode::per_batch_controls ? "sphctrl-batch" : "nosph");
    return out.str();
  }

  static PipelineConfig parse(const std::string& text) {
    std::vector<std::string> tokens;
    std::string token;
    std::istringstream in(text);
    while (std::getline(in, token, '-')) tokens.push_back(token);

    PipelineConfig cfg;
    std::size_t pos = 0;
    auto fail = [&](const std::string& what) {
      throw std::runtime_error("invalid pipeline config '" + text + "': " + what);
    };
    auto next = [&]() -> const std::string& {
      if (pos >= tokens.size()) fail("unexpected end");
      return tokens[pos++];
    };
    auto expect = [&](const std::string& want) {
      if (pos >= tokens.size() || tokens[pos] != want)
        fail("expected '" + want + "' after '" + tokens[pos - 1] + "'");
      ++pos;
    };

    const std::string& cs = next();
    if (cs == "csall") {
      expect("plate");
      cfg.center_scale = CenterScaleMode::per_plate;
    } else if (cs == "nocs") {
      cfg.center_scale = CenterScaleMode::none;
    } else {
      fail("unknown center-scale segment '" + cs + "'");
    }

    const std::string& pca = next();
    if (pca == "nopca") {
      cfg.pca_components.reset();
    } else if (pca.rfind("pca", 0) == 0 && pca.size() > 3) {
      int k = 0;
      try {
        k = std::stoi(pca.substr(3));
      } catch (...) {
        fail("bad PCA component count in '" + pca + "'");
      }
      if (k <= 0) fail("PCA component count must be positive");
      cfg.pca_components = k;
    } else {
      fail("unknown PCA segment '" + pca + "'");
    }

    const std::string& mad = next();
    if (mad == "madctrl") {
      expect("plate");
      cfg.mad = MadMode::per_plate_controls;
    } else if (mad == "madall") {
      expect("plate");
      cfg.mad = MadMode::per_plate_all;
    } else if (mad == "nomad") {
      cfg.mad = MadMode::none;
    } else {
      fail("unknown MAD segment '" + mad + "'");
    }

    const std::string& sph = next();
    if (sph == "sphctrl") {
      expect("batch");
      cfg.sphere = SphereMode::per_batch_controls;
    } else if (sph == "nosph") {
      cfg.sphere = SphereMode::none;
    } else {
      fail("unknown sphering segment '" + sph + "'");
    }

    if (pos != tokens.size()) fail("trailing tokens");
    return cfg;
  }
};

inline bool operator==(const PipelineConfig& a, const PipelineConfig& b) {
  return a.center_scale == b.center_scale && a.pca_components == b.pca_components &&
         a.mad == b.mad && a.sphere == b.sphere && a.epsilon == b.epsilon;
}

}  // namespace morphoeval
