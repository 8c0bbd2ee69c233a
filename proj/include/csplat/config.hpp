// Copyright Contributors to the compactsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "csplat/common.hpp"
#include "csplat/sched.hpp"

namespace csplat {

/// Independent switches for each training trick.
struct Tricks {
    bool blur = true;               // BL: progressive target blurring
    bool downsample = true;         // DS: progressive resolution
    bool significance = true;       // SG: significance pruning events
    bool gaussian_mask = true;      // GM: learned Gaussian masks
    bool sh_mask = true;            // SHM: learned SH band masks
    bool accelerated = true;        // AT: decimated SH updates
    bool late_densify = true;       // DE: late densification window
    bool progressive_scale = true;  // SC: low-pass scale schedule and sparse SfM seeding

    void set_all(bool on) { blur = downsample = significance = gaussian_mask = sh_mask = accelerated = late_densify = progressive_scale = on; }
    bool operator==(const Tricks&) const = default;
};

struct LearningRates {
    double position = 0.00016;  // times scene extent, decays to position_final
    double position_final = 0.0000016;
    double scale = 0.005;
    double rotation = 0.001;
    double opacity = 0.05;
    double sh_dc = 0.0025;
    double sh_rest = 0.0025 / 20;
    double mask = 0.5;
    double sh_mask = 0.05;
};

struct TrainConfig {
    int iters = 30000;
    Timeline timeline;                 // boundaries given for the 30K reference run
    bool timeline_autoscale = true;    // rescale boundaries when iters != timeline.total_iters
    double lambda_ssim = 0.2;
    double lambda_m = 0.05;
    double lambda_sh = 0.05;
    double eps_m = 0.05;
    double eps_sh = 0.1;
    LearningRates lr;
    double densify_grad_threshold = 0.0002;
    double percent_dense = 0.01;
    double min_opacity = 0.005;
    bool opacity_reset = false;
    int opacity_reset_interval = 3000;
    int sh_degree_interval = 1000;
    Tricks tricks;
    ResolutionMode resolution_mode = ResolutionMode::logarithmic;
    double downsample = 8;
    int blur_kernel = 9;
    double blur_sigma = 2.4;
    double blur_decay = 0;  // 0 selects the decay that reaches sigma 0.3 at the end of the ramp
    double sfm_keep = 0.2;
    double signif_beta = 0.5;
    double signif_first_rate = 0.6;
    double signif_decay = 0.7;
    bool holdout = false;  // hold out every 8th view for evaluation
    std::array<double, 3> background{0, 0, 0};
    int tile_size = 16;
    int threads = 1;
    std::uint64_t seed = 0;

    Timeline effective_timeline() const {
        Timeline t = timeline;
        if (timeline_autoscale && iters != t.total_iters) t = t.scaled_to(iters);
        t.total_iters = iters;
        return t;
    }

    double effective_blur_decay() const {
        const auto t = effective_timeline();
        return blur_decay > 0 ? blur_decay : default_blur_decay(blur_sigma, t.blur_step, t.progressive_end);
    }

    void validate() const;
};

namespace config_detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "off" || v == "no") return false;
    throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

inline double parse_double(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double d = 0;
    try {
        d = std::stod(v, &used);
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a number, got '" + v + "'");
    }
    if (used != v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
    return d;
}

inline long long parse_int(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    long long d = 0;
    try {
        d = std::stoll(v, &used);
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected an integer, got '" + v + "'");
    }
    if (used != v.size()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
    return d;
}

inline std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    for (std::string item; std::getline(ss, item, ',');) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

struct Entry {
    std::function<void(TrainConfig&, const std::string&)> set;
    std::function<std::string(const TrainConfig&)> get;
};

inline std::string fmt(double v) {
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
}

inline const std::map<std::string, Entry>& registry() {
    static const std::map<std::string, Entry> reg = [] {
        std::map<std::string, Entry> r;
        auto dbl = [&](const std::string& key, auto member) {
            r[key] = {[=](TrainConfig& c, const std::string& v) { member(c) = parse_double(key, v); },
                      [=](const TrainConfig& c) { return fmt(member(const_cast<TrainConfig&>(c))); }};
        };
        auto integer = [&](const std::string& key, auto member) {
            r[key] = {[=](TrainConfig& c, const std::string& v) { member(c) = static_cast<std::remove_reference_t<decltype(member(c))>>(parse_int(key, v)); },
                      [=](const TrainConfig& c) { return std::to_string(member(const_cast<TrainConfig&>(c))); }};
        };
        auto boolean = [&](const std::string& key, auto member) {
            r[key] = {[=](TrainConfig& c, const std::string& v) { member(c) = parse_bool(key, v); },
                      [=](const TrainConfig& c) { return std::string(member(const_cast<TrainConfig&>(c)) ? "true" : "false"); }};
        };
        integer("iters", [](TrainConfig& c) -> int& { return c.iters; });
        integer("seed", [](TrainConfig& c) -> std::uint64_t& { return c.seed; });
        integer("threads", [](TrainConfig& c) -> int& { return c.threads; });
        integer("render.tile_size", [](TrainConfig& c) -> int& { return c.tile_size; });
        r["render.background"] = {[](TrainConfig& c, const std::string& v) {
                                      const auto parts = split_list(v);
                                      if (parts.size() != 3) throw ConfigError("render.background: expected r,g,b");
                                      for (int k = 0; k < 3; ++k) c.background[k] = parse_double("render.background", parts[k]);
                                  },
                                  [](const TrainConfig& c) {
                                      return fmt(c.background[0]) + "," + fmt(c.background[1]) + "," + fmt(c.background[2]);
                                  }};

        dbl("loss.lambda_ssim", [](TrainConfig& c) -> double& { return c.lambda_ssim; });
        dbl("mask.lambda_m", [](TrainConfig& c) -> double& { return c.lambda_m; });
        dbl("mask.lambda_sh", [](TrainConfig& c) -> double& { return c.lambda_sh; });
        dbl("mask.eps_m", [](TrainConfig& c) -> double& { return c.eps_m; });
        dbl("mask.eps_sh", [](TrainConfig& c) -> double& { return c.eps_sh; });

        dbl("lr.position", [](TrainConfig& c) -> double& { return c.lr.position; });
        dbl("lr.position_final", [](TrainConfig& c) -> double& { return c.lr.position_final; });
        dbl("lr.scale", [](TrainConfig& c) -> double& { return c.lr.scale; });
        dbl("lr.rotation", [](TrainConfig& c) -> double& { return c.lr.rotation; });
        dbl("lr.opacity", [](TrainConfig& c) -> double& { return c.lr.opacity; });
        dbl("lr.sh_dc", [](TrainConfig& c) -> double& { return c.lr.sh_dc; });
        dbl("lr.sh_rest", [](TrainConfig& c) -> double& { return c.lr.sh_rest; });
        dbl("lr.mask", [](TrainConfig& c) -> double& { return c.lr.mask; });
        dbl("lr.sh_mask", [](TrainConfig& c) -> double& { return c.lr.sh_mask; });

        dbl("densify.grad_threshold", [](TrainConfig& c) -> double& { return c.densify_grad_threshold; });
        dbl("densify.percent_dense", [](TrainConfig& c) -> double& { return c.percent_dense; });
        dbl("densify.min_opacity", [](TrainConfig& c) -> double& { return c.min_opacity; });
        boolean("densify.opacity_reset", [](TrainConfig& c) -> bool& { return c.opacity_reset; });
        integer("densify.opacity_reset_interval", [](TrainConfig& c) -> int& { return c.opacity_reset_interval; });
        integer("sh.degree_interval", [](TrainConfig& c) -> int& { return c.sh_degree_interval; });

        boolean("tricks.blur", [](TrainConfig& c) -> bool& { return c.tricks.blur; });
        boolean("tricks.downsample", [](TrainConfig& c) -> bool& { return c.tricks.downsample; });
        boolean("tricks.significance", [](TrainConfig& c) -> bool& { return c.tricks.significance; });
        boolean("tricks.gaussian_mask", [](TrainConfig& c) -> bool& { return c.tricks.gaussian_mask; });
        boolean("tricks.sh_mask", [](TrainConfig& c) -> bool& { return c.tricks.sh_mask; });
        boolean("tricks.accelerated", [](TrainConfig& c) -> bool& { return c.tricks.accelerated; });
        boolean("tricks.late_densify", [](TrainConfig& c) -> bool& { return c.tricks.late_densify; });
        boolean("tricks.progressive_scale", [](TrainConfig& c) -> bool& { return c.tricks.progressive_scale; });
        r["tricks.all"] = {[](TrainConfig& c, const std::string& v) { c.tricks.set_all(parse_bool("tricks.all", v)); },
                           [](const TrainConfig& c) {
                               Tricks on;
                               Tricks off;
                               off.set_all(false);
                               return std::string(c.tricks == on ? "true" : c.tricks == off ? "false" : "mixed");
                           }};

        r["sched.resolution_mode"] = {[](TrainConfig& c, const std::string& v) {
                                          if (v == "linear")
                                              c.resolution_mode = ResolutionMode::linear;
                                          else if (v == "logarithmic" || v == "log")
                                              c.resolution_mode = ResolutionMode::logarithmic;
                                          else
                                              throw ConfigError("sched.resolution_mode: expected linear or logarithmic");
                                      },
                                      [](const TrainConfig& c) {
                                          return std::string(c.resolution_mode == ResolutionMode::linear ? "linear" : "logarithmic");
                                      }};
        dbl("sched.downsample", [](TrainConfig& c) -> double& { return c.downsample; });
        integer("sched.blur_kernel", [](TrainConfig& c) -> int& { return c.blur_kernel; });
        dbl("sched.blur_sigma", [](TrainConfig& c) -> double& { return c.blur_sigma; });
        dbl("sched.blur_decay", [](TrainConfig& c) -> double& { return c.blur_decay; });
        dbl("sched.sfm_keep", [](TrainConfig& c) -> double& { return c.sfm_keep; });

        dbl("signif.beta", [](TrainConfig& c) -> double& { return c.signif_beta; });
        dbl("signif.first_rate", [](TrainConfig& c) -> double& { return c.signif_first_rate; });
        dbl("signif.decay", [](TrainConfig& c) -> double& { return c.signif_decay; });

        boolean("eval.holdout", [](TrainConfig& c) -> bool& { return c.holdout; });

        boolean("timeline.autoscale", [](TrainConfig& c) -> bool& { return c.timeline_autoscale; });
        integer("timeline.total_iters", [](TrainConfig& c) -> int& { return c.timeline.total_iters; });
        integer("timeline.progressive_end", [](TrainConfig& c) -> int& { return c.timeline.progressive_end; });
        integer("timeline.densify_from", [](TrainConfig& c) -> int& { return c.timeline.densify_from; });
        integer("timeline.densify_interval", [](TrainConfig& c) -> int& { return c.timeline.densify_interval; });
        integer("timeline.densify_until", [](TrainConfig& c) -> int& { return c.timeline.densify_until; });
        integer("timeline.late_densify_begin", [](TrainConfig& c) -> int& { return c.timeline.late_densify_begin; });
        integer("timeline.late_densify_end", [](TrainConfig& c) -> int& { return c.timeline.late_densify_end; });
        integer("timeline.late_densify_interval", [](TrainConfig& c) -> int& { return c.timeline.late_densify_interval; });
        integer("timeline.mask_prune_interval", [](TrainConfig& c) -> int& { return c.timeline.mask_prune_interval; });
        integer("timeline.blur_step", [](TrainConfig& c) -> int& { return c.timeline.blur_step; });
        integer("timeline.progressive_scale_until", [](TrainConfig& c) -> int& { return c.timeline.progressive_scale_until; });
        integer("timeline.sh_cadence", [](TrainConfig& c) -> int& { return c.timeline.sh_cadence; });
        r["timeline.significance_events"] = {[](TrainConfig& c, const std::string& v) {
                                                 c.timeline.significance_events.clear();
                                                 for (const auto& item : split_list(v))
                                                     c.timeline.significance_events.push_back(
                                                         static_cast<int>(parse_int("timeline.significance_events", item)));
                                             },
                                             [](const TrainConfig& c) {
                                                 std::string s;
                                                 for (int e : c.timeline.significance_events) s += (s.empty() ? "" : ",") + std::to_string(e);
                                                 return s;
                                             }};
        return r;
    }();
    return reg;
}

}  // namespace config_detail

/// Applies one key=value setting; unknown keys are rejected.
inline void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value) {
    const auto& reg = config_detail::registry();
    const auto it = reg.find(key);
    if (it == reg.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second.set(cfg, config_detail::trim(value));
}

/// Parses "key=value".
inline void apply_override(TrainConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
    apply_setting(cfg, config_detail::trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

/// Every setting as sorted key=value lines.
inline std::vector<std::string> describe_config(const TrainConfig& cfg) {
    std::vector<std::string> out;
    for (const auto& [key, e] : config_detail::registry()) out.push_back(key + "=" + e.get(cfg));
    return out;
}

inline std::string describe_tricks(const Tricks& t) {
    std::string s;
    auto add = [&](const char* name, bool on) { s += std::string(s.empty() ? "" : " ") + name + (on ? "+" : "-"); };
    add("BL", t.blur);
    add("DS", t.downsample);
    add("SG", t.significance);
    add("GM", t.gaussian_mask);
    add("SHM", t.sh_mask);
    add("AT", t.accelerated);
    add("DE", t.late_densify);
    add("SC", t.progressive_scale);
    return s;
}

inline void TrainConfig::validate() const {
    auto open01 = [](double v, const char* name) {
        if (!(v > 0 && v < 1)) throw ConfigError(std::string(name) + " must be in (0, 1)");
    };
    auto nonneg = [](double v, const char* name) {
        if (!(v >= 0)) throw ConfigError(std::string(name) + " must be >= 0");
    };
    auto positive = [](double v, const char* name) {
        if (!(v > 0)) throw ConfigError(std::string(name) + " must be > 0");
    };
    if (iters < 1) throw ConfigError("iters must be >= 1");
    if (!(lambda_ssim >= 0 && lambda_ssim <= 1)) throw ConfigError("loss.lambda_ssim must be in [0, 1]");
    nonneg(lambda_m, "mask.lambda_m");
    nonneg(lambda_sh, "mask.lambda_sh");
    open01(eps_m, "mask.eps_m");
    open01(eps_sh, "mask.eps_sh");
    for (double v : {lr.position, lr.position_final, lr.scale, lr.rotation, lr.opacity, lr.sh_dc, lr.sh_rest, lr.mask, lr.sh_mask})
        nonneg(v, "learning rates");
    positive(densify_grad_threshold, "densify.grad_threshold");
    open01(percent_dense, "densify.percent_dense");
    open01(min_opacity, "densify.min_opacity");
    if (opacity_reset_interval < 1) throw ConfigError("densify.opacity_reset_interval must be >= 1");
    if (sh_degree_interval < 0) throw ConfigError("sh.degree_interval must be >= 0");
    if (!(downsample >= 1)) throw ConfigError("sched.downsample must be >= 1");
    if (blur_kernel < 1 || blur_kernel % 2 == 0) throw ConfigError("sched.blur_kernel must be odd and >= 1");
    nonneg(blur_sigma, "sched.blur_sigma");
    if (blur_decay != 0) open01(blur_decay, "sched.blur_decay");
    if (!(sfm_keep > 0 && sfm_keep <= 1)) throw ConfigError("sched.sfm_keep must be in (0, 1]");
    positive(signif_beta, "signif.beta");
    open01(signif_first_rate, "signif.first_rate");
    open01(signif_decay, "signif.decay");
    if (tile_size < 1) throw ConfigError("render.tile_size must be >= 1");
    if (threads < 1) throw ConfigError("threads must be >= 1");
    effective_timeline().validate();
}

}  // namespace csplat
