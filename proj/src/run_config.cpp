#include "transweather/run_config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "transweather/error.hpp"

namespace tw {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size() || value.empty()) {
    throw ConfigError(key + ": cannot parse '" + value + "' as a number");
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(out)) throw ConfigError(key + ": value must be finite");
  }
  return out;
}

bool parse_switch(const std::string& key, const std::string& value) {
  if (value == "on" || value == "true" || value == "1") return true;
  if (value == "off" || value == "false" || value == "0") return false;
  throw ConfigError(key + ": expected on/off, got '" + value + "'");
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& value) {
  std::vector<std::size_t> out;
  if (trim(value).empty()) return out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<std::size_t>(key, trim(item)));
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string join(const auto& values) {
  std::string s;
  for (auto v : values) s += (s.empty() ? "" : ",") + std::to_string(v);
  return s;
}

struct Field {
  std::string help;
  std::function<void(RunConfig&, const std::string& key, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field number(std::string help, T RunConfig::*member) {
  return {std::move(help), [member](RunConfig& c, const std::string& k, const std::string& v) {
            c.*member = parse_number<T>(k, v);
          },
          [member](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<T>) {
              return format_double(c.*member);
            } else {
              return std::to_string(c.*member);
            }
          }};
}

template <typename T, typename Get>
Field accessor(std::string help, Get get) {
  return {std::move(help), [get](RunConfig& c, const std::string& k, const std::string& v) {
            get(c) = parse_number<T>(k, v);
          },
          [get](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<T>) {
              return format_double(get(const_cast<RunConfig&>(c)));
            } else {
              return std::to_string(get(const_cast<RunConfig&>(c)));
            }
          }};
}

template <typename Get>
Field toggle(std::string help, Get get) {
  return {std::move(help), [get](RunConfig& c, const std::string& k, const std::string& v) {
            get(c) = parse_switch(k, v);
          },
          [get](const RunConfig& c) { return std::string(get(const_cast<RunConfig&>(c)) ? "on" : "off"); }};
}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = [] {
    std::vector<std::pair<std::string, Field>> t;
    for (std::size_t i = 0; i < 4; ++i) {
      const std::string p = "stage" + std::to_string(i + 1) + ".";
      t.emplace_back(p + "depth", accessor<std::size_t>("transformer blocks in the stage",
                                                        [i](RunConfig& c) -> auto& { return c.network.stages[i].depth; }));
      t.emplace_back(p + "dim", accessor<std::size_t>("embedding width C_i",
                                                      [i](RunConfig& c) -> auto& { return c.network.stages[i].embed_dim; }));
      t.emplace_back(p + "heads", accessor<std::size_t>("attention heads",
                                                        [i](RunConfig& c) -> auto& { return c.network.stages[i].num_heads; }));
      t.emplace_back(p + "reduction", accessor<std::size_t>("key/value reduction ratio R", [i](RunConfig& c) -> auto& {
                       return c.network.stages[i].reduction_ratio;
                     }));
      t.emplace_back(p + "intra_reduction", accessor<std::size_t>("reduction ratio of the Intra-PT block",
                                                                  [i](RunConfig& c) -> auto& {
                                                                    return c.network.stages[i].intra_pt_reduction;
                                                                  }));
      t.emplace_back(p + "merge_kernel", accessor<std::size_t>("overlapped patch-merge kernel (> stride)",
                                                               [i](RunConfig& c) -> auto& {
                                                                 return c.network.stages[i].merge_kernel;
                                                               }));
    }
    t.emplace_back("ffn_mult", accessor<std::size_t>("FFN hidden width multiplier",
                                                     [](RunConfig& c) -> auto& { return c.network.ffn_mult; }));
    t.emplace_back("num_queries", accessor<std::size_t>("weather queries Kq",
                                                        [](RunConfig& c) -> auto& { return c.network.num_queries; }));
    t.emplace_back("decoder_depth", accessor<std::size_t>("decoder blocks",
                                                          [](RunConfig& c) -> auto& { return c.network.decoder_depth; }));
    t.emplace_back("tail_channels",
                   Field{"output widths of the four tail convs, comma separated",
                         [](RunConfig& c, const std::string& k, const std::string& v) {
                           const auto list = parse_list(k, v);
                           if (list.size() != 4) throw ConfigError(k + ": expected 4 values");
                           std::copy(list.begin(), list.end(), c.network.tail_channels.begin());
                         },
                         [](const RunConfig& c) { return join(c.network.tail_channels); }});
    t.emplace_back("hierarchical", toggle("multi-stage encoder (off: single-scale baseline)",
                                          [](RunConfig& c) -> auto& { return c.network.hierarchical; }));
    t.emplace_back("intra_pt", toggle("Intra-PT side branches",
                                      [](RunConfig& c) -> auto& { return c.network.intra_pt; }));
    t.emplace_back("weather_queries", toggle("query decoder and task fusion",
                                             [](RunConfig& c) -> auto& { return c.network.weather_queries; }));
    t.emplace_back("lambda", accessor<double>("weight of the feature loss",
                                              [](RunConfig& c) -> auto& { return c.loss.lambda; }));
    t.emplace_back("extractor_seed", accessor<std::uint64_t>("seed of the frozen feature extractor",
                                                             [](RunConfig& c) -> auto& { return c.loss.extractor_seed; }));
    t.emplace_back("lr", accessor<double>("base learning rate",
                                          [](RunConfig& c) -> auto& { return c.schedule.base_lr; }));
    t.emplace_back("halve_epochs", Field{"epochs at which the learning rate halves, comma separated",
                                         [](RunConfig& c, const std::string& k, const std::string& v) {
                                           c.schedule.halve_epochs = parse_list(k, v);
                                         },
                                         [](const RunConfig& c) { return join(c.schedule.halve_epochs); }});
    t.emplace_back("epochs", accessor<std::size_t>("total training epochs",
                                                   [](RunConfig& c) -> auto& { return c.schedule.total_epochs; }));
    t.emplace_back("batch_size", accessor<std::size_t>("training batch size",
                                                       [](RunConfig& c) -> auto& { return c.schedule.batch_size; }));
    t.emplace_back("grad_clip", number("global gradient-norm clip, 0 disables", &RunConfig::grad_clip));
    t.emplace_back("paper_faithful", toggle("turn off gradient clipping",
                                            [](RunConfig& c) -> auto& { return c.paper_faithful; }));
    t.emplace_back("val_fraction", number("trailing fraction of rows held out", &RunConfig::val_fraction));
    t.emplace_back("checkpoint_every", number("epochs between checkpoints, 0: end only", &RunConfig::checkpoint_every));
    t.emplace_back("seed", Field{"seed for init, data order and generation",
                                 [](RunConfig& c, const std::string& k, const std::string& v) {
                                   c.set_seed(parse_number<std::uint64_t>(k, v));
                                 },
                                 [](const RunConfig& c) { return std::to_string(c.seed); }});
    t.emplace_back("data.count", accessor<std::size_t>("pairs written by gen",
                                                       [](RunConfig& c) -> auto& { return c.data.count; }));
    t.emplace_back("data.size", Field{"side length of generated images",
                                      [](RunConfig& c, const std::string& k, const std::string& v) {
                                        c.data.height = c.data.width = parse_number<std::size_t>(k, v);
                                      },
                                      [](const RunConfig& c) { return std::to_string(c.data.height); }});
    t.emplace_back("data.mix", Field{"uniform, paper, or raindrop:w,rain_fog:w,snow:w",
                                     [](RunConfig& c, const std::string& k, const std::string& v) {
                                       try {
                                         c.data.mix = WeatherMix::parse(v);
                                       } catch (const InputError& e) {
                                         throw ConfigError(k + ": " + e.what());
                                       }
                                       c.mix = v;
                                     },
                                     [](const RunConfig& c) { return c.mix; }});
    t.emplace_back("data.min_intensity", accessor<double>("lower bound of sampled degradation intensity",
                                                          [](RunConfig& c) -> auto& { return c.data.min_intensity; }));
    t.emplace_back("data.max_intensity", accessor<double>("upper bound of sampled degradation intensity",
                                                          [](RunConfig& c) -> auto& { return c.data.max_intensity; }));
    return t;
  }();
  return table;
}

const Field& field(const std::string& key) {
  for (const auto& [name, f] : fields()) {
    if (name == key) return f;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

void RunConfig::set_seed(std::uint64_t s) {
  seed = s;
  network.seed = s;
  data.seed = s;
}

void RunConfig::validate() const {
  network.validate();
  schedule.validate();
  if (!(loss.lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  if (!(grad_clip >= 0.0)) throw ConfigError("grad_clip must be >= 0");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must lie in [0, 1)");
  if (!(data.min_intensity > 0.0 && data.min_intensity <= data.max_intensity && data.max_intensity <= 1.0)) {
    throw ConfigError("intensity bounds must satisfy 0 < min <= max <= 1");
  }
  if (data.count == 0 || data.height == 0) throw ConfigError("data.count and data.size must be >= 1");
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const auto& [name, f] : fields()) k.push_back({name, f.help});
    return k;
  }();
  return keys;
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  field(key).set(config, key, value);
}

std::string get_config_value(const RunConfig& config, const std::string& key) { return field(key).get(config); }

RunConfig parse_run_config(std::string_view text, RunConfig base) {
  std::stringstream ss{std::string(text)};
  std::string line;
  for (std::size_t lineno = 1; std::getline(ss, line); ++lineno) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto content = trim(line);
    if (content.empty()) continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    }
    try {
      set_config_value(base, trim(content.substr(0, eq)), trim(content.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_run_config(ss.str(), std::move(base));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string to_text(const RunConfig& config) {
  std::string out;
  for (const auto& [name, f] : fields()) out += name + " = " + f.get(config) + "\n";
  return out;
}

}  // namespace tw
