#include "fgsgt/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace fgsgt {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw std::invalid_argument("config: " + key + " expects a number, got '" + v + "'");
  return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    throw std::invalid_argument("config: " + key + " expects a non-negative integer, got '" + v + "'");
  }
  return std::stoull(v);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename Get>
Field real(std::string key, Get get) {
  return {key, [get, key](RunConfig& c, const std::string& v) { get(c) = to_double(key, v); },
          [get](const RunConfig& c) { return fmt(get(const_cast<RunConfig&>(c))); }};
}

template <typename Get>
Field integer(std::string key, Get get) {
  return {key,
          [get, key](RunConfig& c, const std::string& v) {
            get(c) = static_cast<std::remove_reference_t<decltype(get(c))>>(to_uint(key, v));
          },
          [get](const RunConfig& c) { return std::to_string(get(const_cast<RunConfig&>(c))); }};
}

template <typename Get>
Field real_list(std::string key, Get get) {
  return {key,
          [get, key](RunConfig& c, const std::string& v) {
            auto& dst = get(c);
            dst.clear();
            for (const auto& item : split_list(v)) dst.push_back(to_double(key, item));
          },
          [get](const RunConfig& c) {
            std::string s;
            for (double x : get(const_cast<RunConfig&>(c))) s += (s.empty() ? "" : ", ") + fmt(x);
            return s;
          }};
}

template <typename Get>
Field size5(std::string key, Get get) {
  return {key,
          [get, key](RunConfig& c, const std::string& v) {
            const auto items = split_list(v);
            if (items.size() != 5) throw std::invalid_argument("config: " + key + " expects 5 comma-separated values");
            for (std::size_t i = 0; i < 5; ++i) get(c)[i] = to_uint(key, items[i]);
          },
          [get](const RunConfig& c) {
            std::string s;
            for (auto x : get(const_cast<RunConfig&>(c))) s += (s.empty() ? "" : ", ") + std::to_string(x);
            return s;
          }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      integer("seed", [](RunConfig& c) -> std::uint64_t& { return c.seed; }),
      {"mode",
       [](RunConfig& c, const std::string& v) {
         if (v != "desk" && v != "full") throw std::invalid_argument("config: mode must be 'desk' or 'full', got '" + v + "'");
         c.mode = v;
       },
       [](const RunConfig& c) { return c.mode; }},

      size5("model.widths", [](RunConfig& c) -> auto& { return c.model.backbone.widths; }),
      size5("model.strides", [](RunConfig& c) -> auto& { return c.model.backbone.strides; }),
      size5("model.dilations", [](RunConfig& c) -> auto& { return c.model.backbone.dilations; }),
      integer("model.reduced_channels", [](RunConfig& c) -> auto& { return c.model.backbone.reduced_channels; }),
      integer("model.fgpcb_branch_width", [](RunConfig& c) -> auto& { return c.model.backbone.fgpcb_branch_width; }),
      integer("model.fusion_classes", [](RunConfig& c) -> auto& { return c.model.backbone.fusion_classes; }),
      real("model.leaky_alpha", [](RunConfig& c) -> auto& { return c.model.backbone.act.alpha; }),
      real_list("anchors.ratios", [](RunConfig& c) -> auto& { return c.model.anchors.ratios; }),
      real("anchors.base_size", [](RunConfig& c) -> auto& { return c.model.anchors.base_size; }),
      integer("saliency.channels", [](RunConfig& c) -> auto& { return c.model.saliency.channels; }),
      integer("saliency.phi_hidden", [](RunConfig& c) -> auto& { return c.model.saliency.phi_hidden; }),
      integer("saliency.steps", [](RunConfig& c) -> auto& { return c.model.saliency.steps; }),

      real("loss.lambda_cls", [](RunConfig& c) -> auto& { return c.loss.lambda_cls; }),
      real("loss.lambda_reg", [](RunConfig& c) -> auto& { return c.loss.lambda_reg; }),
      real("loss.lambda_sal", [](RunConfig& c) -> auto& { return c.loss.lambda_sal; }),
      real("loss.lambda_iou", [](RunConfig& c) -> auto& { return c.loss.lambda_iou; }),
      real("loss.lambda_l1", [](RunConfig& c) -> auto& { return c.loss.lambda_l1; }),
      real_list("loss.step_weights", [](RunConfig& c) -> auto& { return c.loss.step_weights; }),

      real("train.lr", [](RunConfig& c) -> auto& { return c.train.lr; }),
      real("train.momentum", [](RunConfig& c) -> auto& { return c.train.momentum; }),
      integer("train.steps", [](RunConfig& c) -> auto& { return c.train.steps; }),
      integer("train.log_every", [](RunConfig& c) -> auto& { return c.train.log_every; }),
      integer("train.checkpoint_every", [](RunConfig& c) -> auto& { return c.train.checkpoint_every; }),
      real("train.pos_iou", [](RunConfig& c) -> auto& { return c.train.pos_iou; }),
      real("train.neg_iou", [](RunConfig& c) -> auto& { return c.train.neg_iou; }),
      integer("train.cls_samples", [](RunConfig& c) -> auto& { return c.train.cls_samples; }),
      integer("train.cls_max_pos", [](RunConfig& c) -> auto& { return c.train.cls_max_pos; }),
      integer("train.pairs", [](RunConfig& c) -> auto& { return c.train.pairs; }),
      integer("train.sequences", [](RunConfig& c) -> auto& { return c.train.sequences; }),
      integer("train.frames", [](RunConfig& c) -> auto& { return c.train.frames; }),
      integer("train.max_gap", [](RunConfig& c) -> auto& { return c.train.max_gap; }),
      real("train.jitter", [](RunConfig& c) -> auto& { return c.train.jitter; }),
      real("train.max_speed", [](RunConfig& c) -> auto& { return c.train.max_speed; }),
      integer("train.distractors", [](RunConfig& c) -> auto& { return c.train.distractors; }),
      real("train.noise_sigma", [](RunConfig& c) -> auto& { return c.train.noise_sigma; }),

      integer("scene.width", [](RunConfig& c) -> auto& { return c.scene.width; }),
      integer("scene.height", [](RunConfig& c) -> auto& { return c.scene.height; }),
      real("scene.background", [](RunConfig& c) -> auto& { return c.scene.background; }),
      real("scene.target_radius", [](RunConfig& c) -> auto& { return c.scene.target_radius; }),
      real("scene.target_intensity", [](RunConfig& c) -> auto& { return c.scene.target_intensity; }),
      real("scene.distractor_radius", [](RunConfig& c) -> auto& { return c.scene.distractor_radius; }),
      real("scene.distractor_intensity", [](RunConfig& c) -> auto& { return c.scene.distractor_intensity; }),
      real("scene.distractor_speed", [](RunConfig& c) -> auto& { return c.scene.distractor_speed; }),

      real("select.penalty_k", [](RunConfig& c) -> auto& { return c.select.penalty_k; }),
      real("select.window_influence", [](RunConfig& c) -> auto& { return c.select.window_influence; }),
      real("select.size_lr", [](RunConfig& c) -> auto& { return c.select.size_lr; }),
      real("select.min_size", [](RunConfig& c) -> auto& { return c.select.min_size; }),
  };
  return table;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const Field& f : fields()) {
    if (f.key == key) {
      f.set(*this, value);
      return;
    }
  }
  throw std::invalid_argument("config: unknown key '" + key + "'");
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig c;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    try {
      c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  c.finalize();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void RunConfig::finalize() {
  if (mode == "desk") {
    model.template_size = 32;
    model.search_size = 64;
  } else {
    // 127 / 255 rounded up to the next multiple of the backbone stride.
    model.template_size = 128;
    model.search_size = 256;
  }
  model.sync();
  model.validate();
  model.saliency.act.validate();
  if (loss.step_weights.size() != model.saliency.steps + 1) {
    throw std::invalid_argument("config: loss.step_weights needs " + std::to_string(model.saliency.steps + 1) +
                                " values (saliency.steps + 1), got " + std::to_string(loss.step_weights.size()));
  }
  loss.validate();
  train.validate();
}

std::string RunConfig::manifest() const {
  std::string out;
  for (const Field& f : fields()) out += f.key + " = " + f.get(*this) + "\n";
  out += "# derived: template_size = " + std::to_string(model.template_size) +
         ", search_size = " + std::to_string(model.search_size) + "\n";
  return out;
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const Field& f : fields()) out.push_back(f.key);
  return out;
}

}  // namespace fgsgt
