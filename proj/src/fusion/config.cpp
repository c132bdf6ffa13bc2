#include "goalnav/fusion/config.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <utility>

#include "goalnav/nn/tensor.hpp"

namespace goalnav::fusion {

using nn::ConfigurationError;

namespace {

template <typename E, std::size_t N>
E parse_enum(const std::string& s, const std::string& field,
             const std::array<std::pair<const char*, E>, N>& table) {
  std::string up = s;
  std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return std::toupper(c); });
  std::replace(up.begin(), up.end(), '-', '_');
  std::string allowed;
  for (const auto& [name, value] : table) {
    if (up == name) return value;
    allowed += std::string(allowed.empty() ? "" : ", ") + name;
  }
  throw ConfigurationError("invalid value '" + s + "' for field '" + field + "' (expected one of " +
                           allowed + ")");
}

template <typename E, std::size_t N>
std::string enum_name(E v, const std::array<std::pair<const char*, E>, N>& table) {
  for (const auto& [name, value] : table)
    if (value == v) return name;
  return "UNKNOWN";
}

constexpr std::array<std::pair<const char*, Mechanism>, 4> kMechanisms{
    {{"LATE", Mechanism::kLate}, {"EARLY", Mechanism::kEarly}, {"MID", Mechanism::kMid}, {"SKIP", Mechanism::kSkip}}};
constexpr std::array<std::pair<const char*, EarlyConcat>, 3> kConcats{
    {{"CHANNEL", EarlyConcat::kChannel}, {"EDGE", EarlyConcat::kEdge}, {"STACK3D", EarlyConcat::kStack3d}}};
constexpr std::array<std::pair<const char*, MidMapping>, 2> kMappings{
    {{"FG_HR", MidMapping::kFgHr}, {"SEMANTIC", MidMapping::kSemantic}}};
constexpr std::array<std::pair<const char*, Modeling>, 3> kModelings{
    {{"SEPARATE", Modeling::kSeparate}, {"TIED", Modeling::kTied}, {"JOINT", Modeling::kJoint}}};
constexpr std::array<std::pair<const char*, FilmPlacement>, 2> kPlacements{
    {{"BEFORE_RESIDUAL", FilmPlacement::kBeforeResidual}, {"AFTER_BLOCK", FilmPlacement::kAfterBlock}}};

}  // namespace

std::string to_string(Mechanism m) { return enum_name(m, kMechanisms); }
std::string to_string(EarlyConcat m) { return enum_name(m, kConcats); }
std::string to_string(MidMapping m) { return enum_name(m, kMappings); }
std::string to_string(Modeling m) { return enum_name(m, kModelings); }
std::string to_string(FilmPlacement m) { return enum_name(m, kPlacements); }

Mechanism parse_mechanism(const std::string& s, const std::string& field) { return parse_enum(s, field, kMechanisms); }
EarlyConcat parse_early_concat(const std::string& s, const std::string& field) { return parse_enum(s, field, kConcats); }
MidMapping parse_mid_mapping(const std::string& s, const std::string& field) { return parse_enum(s, field, kMappings); }
Modeling parse_modeling(const std::string& s, const std::string& field) { return parse_enum(s, field, kModelings); }
FilmPlacement parse_film_placement(const std::string& s, const std::string& field) {
  return parse_enum(s, field, kPlacements);
}

BackboneSpec BackboneSpec::slimmed(int factor) const {
  BackboneSpec out = *this;
  const int f = std::max(1, factor);
  auto shrink = [&](int c) { return std::max(groups, c / f); };
  out.stem.channels = shrink(stem.channels);
  for (auto& b : out.blocks) b.channels = shrink(b.channels);
  out.embed_dim = std::max(8, embed_dim / f);
  return out;
}

Modeling default_modeling(Mechanism m) { return m == Mechanism::kEarly ? Modeling::kJoint : Modeling::kSeparate; }

void validate(const FusionConfig& cfg) {
  const auto& bb = cfg.backbone;
  if (bb.blocks.size() != 4) throw ConfigurationError("backbone.blocks: exactly 4 residual blocks required");
  if (bb.groups <= 0) throw ConfigurationError("backbone.groups must be positive");
  if (bb.embed_dim <= 0) throw ConfigurationError("backbone.embed_dim must be positive");
  if (bb.stem.channels <= 0 || bb.stem.channels % bb.groups != 0)
    throw ConfigurationError("backbone.stem.channels must be a positive multiple of backbone.groups");
  if (bb.stem.kernel <= 0 || bb.stem.kernel % 2 == 0) throw ConfigurationError("backbone.stem.kernel must be odd");
  if (bb.stem.stride <= 0) throw ConfigurationError("backbone.stem.stride must be positive");
  for (const auto& b : bb.blocks) {
    if (b.channels <= 0 || b.channels % bb.groups != 0)
      throw ConfigurationError("backbone.blocks: channels must be a positive multiple of backbone.groups");
    if (b.stride != 1 && b.stride != 2) throw ConfigurationError("backbone.blocks: stride must be 1 or 2");
  }
  if (cfg.resolution < 16) throw ConfigurationError("resolution must be at least 16");
  if (cfg.mid_depth != 1 && cfg.mid_depth != 2 && cfg.mid_depth != 4)
    throw ConfigurationError("mid_depth must be 1, 2 or 4");
  if (cfg.skip_k < 1) throw ConfigurationError("skip_k must be at least 1");
  if (cfg.skip_hidden < 1) throw ConfigurationError("skip_hidden must be at least 1");
  switch (cfg.mechanism) {
    case Mechanism::kEarly:
      if (cfg.modeling != Modeling::kJoint) throw ConfigurationError("modeling: EARLY fusion requires JOINT");
      break;
    case Mechanism::kLate:
    case Mechanism::kSkip:
      if (cfg.modeling == Modeling::kJoint)
        throw ConfigurationError("modeling: LATE and SKIP fusion require SEPARATE or TIED");
      break;
    case Mechanism::kMid:
      if (cfg.modeling != Modeling::kSeparate) throw ConfigurationError("modeling: MID fusion requires SEPARATE");
      break;
  }
}

nlohmann::json to_json(const FusionConfig& cfg) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : cfg.backbone.blocks) blocks.push_back({{"channels", b.channels}, {"stride", b.stride}});
  return {{"mechanism", to_string(cfg.mechanism)},
          {"early_concat", to_string(cfg.early_concat)},
          {"mid_mapping", to_string(cfg.mid_mapping)},
          {"mid_depth", cfg.mid_depth},
          {"skip_k", cfg.skip_k},
          {"skip_hidden", cfg.skip_hidden},
          {"skip_max_points", cfg.skip_max_points},
          {"modeling", to_string(cfg.modeling)},
          {"film_placement", to_string(cfg.film_placement)},
          {"resolution", cfg.resolution},
          {"backbone",
           {{"stem", {{"channels", cfg.backbone.stem.channels}, {"kernel", cfg.backbone.stem.kernel},
                      {"stride", cfg.backbone.stem.stride}}},
            {"blocks", blocks},
            {"embed_dim", cfg.backbone.embed_dim},
            {"groups", cfg.backbone.groups}}}};
}

FusionConfig fusion_from_json(const nlohmann::json& j, FusionConfig cfg) {
  auto str = [&](const char* key, auto parse, auto& out) {
    if (!j.contains(key)) return;
    if (!j.at(key).is_string()) throw ConfigurationError(std::string("field '") + key + "' must be a string");
    out = parse(j.at(key).get<std::string>(), key);
  };
  auto num = [&](const nlohmann::json& obj, const char* key, int& out) {
    if (!obj.contains(key)) return;
    if (!obj.at(key).is_number_integer()) throw ConfigurationError(std::string("field '") + key + "' must be an integer");
    out = obj.at(key).get<int>();
  };
  const bool has_modeling = j.contains("modeling");
  str("mechanism", parse_mechanism, cfg.mechanism);
  if (!has_modeling && j.contains("mechanism")) cfg.modeling = default_modeling(cfg.mechanism);
  str("early_concat", parse_early_concat, cfg.early_concat);
  str("mid_mapping", parse_mid_mapping, cfg.mid_mapping);
  str("modeling", parse_modeling, cfg.modeling);
  str("film_placement", parse_film_placement, cfg.film_placement);
  num(j, "mid_depth", cfg.mid_depth);
  num(j, "skip_k", cfg.skip_k);
  num(j, "skip_hidden", cfg.skip_hidden);
  num(j, "skip_max_points", cfg.skip_max_points);
  num(j, "resolution", cfg.resolution);
  if (j.contains("backbone")) {
    const auto& b = j.at("backbone");
    if (b.contains("stem")) {
      num(b.at("stem"), "channels", cfg.backbone.stem.channels);
      num(b.at("stem"), "kernel", cfg.backbone.stem.kernel);
      num(b.at("stem"), "stride", cfg.backbone.stem.stride);
    }
    if (b.contains("blocks")) {
      cfg.backbone.blocks.clear();
      for (const auto& blk : b.at("blocks")) {
        BlockSpec s;
        num(blk, "channels", s.channels);
        num(blk, "stride", s.stride);
        cfg.backbone.blocks.push_back(s);
      }
    }
    num(b, "embed_dim", cfg.backbone.embed_dim);
    num(b, "groups", cfg.backbone.groups);
  }
  return cfg;
}

}  // namespace goalnav::fusion
