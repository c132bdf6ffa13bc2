#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace goalnav::fusion {

enum class Mechanism { kLate, kEarly, kMid, kSkip };
enum class EarlyConcat { kChannel, kEdge, kStack3d };
enum class MidMapping { kFgHr, kSemantic };
enum class Modeling { kSeparate, kTied, kJoint };
/// Where FiLM acts inside a residual block.
enum class FilmPlacement { kBeforeResidual, kAfterBlock };

std::string to_string(Mechanism m);
std::string to_string(EarlyConcat m);
std::string to_string(MidMapping m);
std::string to_string(Modeling m);
std::string to_string(FilmPlacement m);

/// Parsers throw nn::ConfigurationError naming `field` on unknown values.
Mechanism parse_mechanism(const std::string& s, const std::string& field = "mechanism");
EarlyConcat parse_early_concat(const std::string& s, const std::string& field = "early_concat");
MidMapping parse_mid_mapping(const std::string& s, const std::string& field = "mid_mapping");
Modeling parse_modeling(const std::string& s, const std::string& field = "modeling");
FilmPlacement parse_film_placement(const std::string& s, const std::string& field = "film_placement");

struct StemSpec {
  int channels = 32;
  int kernel = 5;
  int stride = 2;
};

struct BlockSpec {
  int channels = 64;
  int stride = 1;
};

struct BackboneSpec {
  StemSpec stem;
  std::vector<BlockSpec> blocks{{32, 2}, {64, 2}, {128, 2}, {128, 1}};
  int embed_dim = 512;
  int groups = 8;

  /// Same layout with every width divided by `factor` (min one group each).
  BackboneSpec slimmed(int factor) const;
};

struct FusionConfig {
  Mechanism mechanism = Mechanism::kLate;
  EarlyConcat early_concat = EarlyConcat::kChannel;
  MidMapping mid_mapping = MidMapping::kFgHr;
  int mid_depth = 1;
  int skip_k = 16;
  int skip_hidden = 64;
  int skip_max_points = 64;
  Modeling modeling = Modeling::kSeparate;
  FilmPlacement film_placement = FilmPlacement::kBeforeResidual;
  BackboneSpec backbone;
  int resolution = 64;
};

/// Default modelling for a mechanism: JOINT for EARLY, SEPARATE otherwise.
Modeling default_modeling(Mechanism m);

/// Throws nn::ConfigurationError naming the offending field.
void validate(const FusionConfig& cfg);

nlohmann::json to_json(const FusionConfig& cfg);
/// Missing keys keep their defaults.
FusionConfig fusion_from_json(const nlohmann::json& j, FusionConfig base = {});

}  // namespace goalnav::fusion
