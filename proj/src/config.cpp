#include "vqr/config.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "vqr/error.hpp"
#include "vqr/rng.hpp"

namespace vqr {

namespace {

enum class Kind { Int, Real, Eps, EpsList, Bool, Str, StrList };

struct KeySpec {
  const char* key;
  Kind kind;
  const char* value;
};

// clang-format off
constexpr KeySpec kKeys[] = {
    {"run.seed", Kind::Int, "0"},

    {"data.source", Kind::Str, "shapes"},
    {"data.train_size", Kind::Int, "2000"},
    {"data.test_size", Kind::Int, "500"},
    {"data.classes", Kind::Int, "4"},
    {"data.noise", Kind::Real, "0.05"},
    {"data.cifar_train", Kind::StrList, ""},
    {"data.cifar_test", Kind::StrList, ""},

    {"tokenizer.image_side", Kind::Int, "32"},
    {"tokenizer.channels", Kind::Int, "3"},
    {"tokenizer.patch_side", Kind::Int, "8"},
    {"tokenizer.code_dim", Kind::Int, "16"},
    {"tokenizer.codebook_size", Kind::Int, "64"},
    {"tokenizer.num_codebooks", Kind::Int, "4"},
    {"tokenizer.encoder_width", Kind::Int, "64"},
    {"tokenizer.encoder_depth", Kind::Int, "2"},

    {"pretrain.epochs", Kind::Int, "20"},
    {"pretrain.batch_size", Kind::Int, "32"},
    {"pretrain.lr", Kind::Real, "0.002"},
    {"pretrain.beta_commit", Kind::Real, "0.25"},
    {"pretrain.reset_every", Kind::Int, "20"},

    {"probe.arch", Kind::Str, "linear"},
    {"probe.hidden", Kind::Int, "256"},
    {"probe.epochs", Kind::Int, "100"},
    {"probe.batch_size", Kind::Int, "64"},
    {"probe.lr", Kind::Real, "0.003"},

    {"input.tokenizer", Kind::Str, ""},
    {"input.reference", Kind::Str, ""},
    {"input.probe", Kind::Str, ""},
    {"input.reports", Kind::StrList, ""},

    {"budget.norm", Kind::Str, "linf"},
    {"budget.epsilon", Kind::Eps, "4/255"},

    {"apgd.n_iters", Kind::Int, "100"},
    {"apgd.n_restarts", Kind::Int, "1"},
    {"apgd.momentum", Kind::Real, "0.75"},
    {"apgd.step_fraction", Kind::Real, "1"},
    {"apgd.step_decay", Kind::Real, "0.5"},
    {"apgd.rho", Kind::Real, "0.75"},
    {"apgd.random_start", Kind::Bool, "true"},

    {"attack.objective", Kind::Str, "unsup_hh"},
    {"attack.batch_size", Kind::Int, "50"},

    {"finetune.train_radius", Kind::Eps, "8/255"},
    {"finetune.inner_steps", Kind::Int, "10"},
    {"finetune.epochs", Kind::Int, "1"},
    {"finetune.lr", Kind::Real, "0.001"},
    {"finetune.warmup_fraction", Kind::Real, "0.05"},
    {"finetune.batch_size", Kind::Int, "8"},
    {"finetune.inner_random_start", Kind::Bool, "true"},

    {"eval.objectives", Kind::StrList, "sup_ce,unsup_hh"},
    {"eval.epsilons", Kind::EpsList, "0,2/255,4/255"},

    {"ablation.epsilons", Kind::EpsList, "1/255,2/255,4/255"},

    {"reconstruct.epsilons", Kind::EpsList, "0,4/255,8/255"},
    {"reconstruct.iters", Kind::Int, "500"},
    {"reconstruct.images", Kind::Int, "8"},

    {"targeted.mode", Kind::Str, "embed"},
    {"targeted.pairs", Kind::Int, "50"},
    {"targeted.epsilon", Kind::Eps, "8/255"},
    {"targeted.iters", Kind::Int, "100"},

    {"bench.batches", Kind::Int, "50"},
    {"bench.warmup", Kind::Int, "3"},
    {"bench.probe_arch", Kind::Str, "mlp"},
    {"bench.probe_hidden", Kind::Int, "512"},
};
// clang-format on

const KeySpec* find_key(const std::string& key) {
  for (const auto& k : kKeys)
    if (key == k.key) return &k;
  return nullptr;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  if (trim(text).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = text.find(',', start);
    out.push_back(trim(text.substr(start, comma == std::string_view::npos ? comma : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_double(std::string_view s, const std::string& what) {
  const std::string t = trim(s);
  double v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v))
    throw FormatError(what + ": '" + t + "' is not a number");
  return v;
}

std::int64_t parse_int(std::string_view s, const std::string& what) {
  const std::string t = trim(s);
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size())
    throw FormatError(what + ": '" + t + "' is not an integer");
  return v;
}

bool parse_bool(std::string_view s, const std::string& what) {
  const std::string t = trim(s);
  if (t == "true" || t == "1") return true;
  if (t == "false" || t == "0") return false;
  throw FormatError(what + ": '" + t + "' is not a boolean (true/false)");
}

void check_value(const KeySpec& spec, const std::string& value) {
  const std::string what = spec.key;
  switch (spec.kind) {
    case Kind::Int:
      if (parse_int(value, what) < 0) throw FormatError(what + ": must be >= 0");
      break;
    case Kind::Real:
      parse_double(value, what);
      break;
    case Kind::Eps:
      parse_epsilon(value);
      break;
    case Kind::EpsList:
      parse_epsilon_list(value);
      break;
    case Kind::Bool:
      parse_bool(value, what);
      break;
    case Kind::Str:
    case Kind::StrList:
      break;
  }
}

}  // namespace

double parse_epsilon(std::string_view text) {
  const std::string t = trim(text);
  const auto slash = t.find('/');
  double v;
  if (slash == std::string::npos) {
    v = parse_double(t, "epsilon");
  } else {
    const double num = parse_double(std::string_view(t).substr(0, slash), "epsilon numerator");
    const double den = parse_double(std::string_view(t).substr(slash + 1), "epsilon denominator");
    if (!(den > 0)) throw FormatError("epsilon: denominator must be positive in '" + t + "'");
    v = num / den;
  }
  if (v < 0) throw FormatError("epsilon: must be >= 0, got '" + t + "'");
  return v;
}

std::vector<double> parse_epsilon_list(std::string_view text) {
  std::vector<double> out;
  for (const auto& item : split_list(text)) out.push_back(parse_epsilon(item));
  return out;
}

std::string format_real(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

RunConfig::RunConfig() {
  for (const auto& k : kKeys) values_[k.key] = k.value;
}

RunConfig RunConfig::parse(std::string_view text, const std::string& origin) {
  RunConfig cfg;
  std::size_t line_no = 0, start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    ++line_no;
    start = end + 1;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    if (trim(line).empty()) continue;
    try {
      cfg.apply(line);
    } catch (const FormatError& e) {
      throw FormatError(origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

void RunConfig::apply(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos)
    throw FormatError("expected 'section.key = value', got '" + trim(assignment) + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const KeySpec* spec = find_key(key);
  if (spec == nullptr) throw FormatError("unknown config key '" + key + "'");
  check_value(*spec, value);
  values_[key] = value;
}

std::string RunConfig::serialize() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

std::uint64_t RunConfig::hash() const { return fnv1a(serialize()); }

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw FormatError("unknown config key '" + key + "'");
  return it->second;
}

std::int64_t RunConfig::integer(const std::string& key) const { return parse_int(get(key), key); }
std::size_t RunConfig::count(const std::string& key) const {
  return static_cast<std::size_t>(integer(key));
}
double RunConfig::real(const std::string& key) const { return parse_double(get(key), key); }
bool RunConfig::flag(const std::string& key) const { return parse_bool(get(key), key); }
double RunConfig::epsilon(const std::string& key) const { return parse_epsilon(get(key)); }
std::vector<double> RunConfig::epsilons(const std::string& key) const {
  return parse_epsilon_list(get(key));
}
std::vector<std::string> RunConfig::list(const std::string& key) const { return split_list(get(key)); }

}  // namespace vqr
