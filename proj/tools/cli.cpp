#include "typecase/cli.hpp"

#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "typecase/analytics.hpp"
#include "typecase/io.hpp"
#include "typecase/service.hpp"
#include "typecase/synth.hpp"

namespace typecase {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Csv {
 public:
  explicit Csv(std::initializer_list<std::string> header) { row(std::vector<std::string>(header)); }

  void row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) text_ += ',';
      text_ += csv_field(fields[i]);
    }
    text_ += "\r\n";
  }

  const std::string& text() const { return text_; }

 private:
  std::string text_;
};

template <class T>
std::string str(const T& v) {
  if constexpr (std::is_same_v<T, double>) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  } else if constexpr (std::is_same_v<T, bool>) {
    return v ? "true" : "false";
  } else {
    return std::to_string(v);
  }
}

ParsedDataset load(const std::string& path) {
  if (!fs::exists(path)) throw UsageError("dataset not found: " + path);
  return parse_dataset(read_file(path));
}

SynthConfig synth_config(const std::string& path) {
  SynthConfig cfg;
  if (path.empty()) return cfg;
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw UsageError("config is not valid JSON: " + std::string(e.what()));
  }
  if (!j.is_object()) throw UsageError("config must be an object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "seed") cfg.seed = v.get<std::uint64_t>();
      else if (key == "n_characters") cfg.n_characters = v.get<int>();
      else if (key == "blocks_per_character") cfg.blocks_per_character = v.get<int>();
      else if (key == "n_spreads") cfg.n_spreads = v.get<int>();
      else if (key == "lines_per_spread") cfg.lines_per_spread = v.get<int>();
      else if (key == "segments_per_line") cfg.segments_per_line = v.get<int>();
      else if (key == "unit_height_px") cfg.unit_height_px = v.get<double>();
      else if (key == "segment_width_px") cfg.segment_width_px = v.get<int>();
      else if (key == "planted_duplicates") cfg.planted_duplicates = v.get<int>();
      else if (key == "planted_oversize") cfg.planted_oversize = v.get<int>();
      else if (key == "render_images") cfg.render_images = v.get<bool>();
      else if (key == "noise_density") cfg.noise_density = v.get<double>();
      else if (key == "height_jitter") cfg.height_jitter = v.get<double>();
      else if (key == "twin_stamp_pairs") cfg.twin_stamp_pairs = v.get<int>();
      else if (key == "title") cfg.title = v.get<std::string>();
      else if (key == "usage") {
        const auto kind = v.at("kind").get<std::string>();
        if (kind == "zipf") cfg.usage.kind = UsageDistribution::Kind::Zipf;
        else if (kind == "constant") cfg.usage.kind = UsageDistribution::Kind::Constant;
        else throw UsageError("usage.kind must be constant or zipf");
        cfg.usage.exponent = v.value("exponent", 1.0);
      } else if (key == "partition") {
        cfg.partition = PartitionConfig{v.at("boundary_spread").get<std::int64_t>(),
                                        v.value("pool_overlap_fraction", 0.0)};
      } else {
        throw UsageError("unknown config key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw UsageError("bad config value: " + std::string(e.what()));
  }
  return cfg;
}

// Runs one analytic, keeping going when it does not apply to the data.
template <class F>
void section(json& report, const std::string& name, F&& f) {
  try {
    report[name] = f();
  } catch (const Error& e) {
    report[name] = {{"error", {{"code", std::string(to_string(e.code()))}, {"message", e.what()}}}};
  }
}

void analyze(const ParsedDataset& parsed, const fs::path& out_dir, std::int64_t min_shared, double k) {
  fs::create_directories(out_dir);
  const auto ds = IndexedDataset::build(parsed.dataset);
  json report;
  auto write = [&](const std::string& name, const Csv& csv) { write_file((out_dir / name).string(), csv.text()); };

  const auto s = summary(ds);
  report["summary"] = {{"n_spreads", s.n_spreads},           {"n_segments", s.n_segments},
                       {"n_blocks", s.n_blocks},             {"n_characters", s.n_characters},
                       {"unit_height_px", s.unit_height_px}, {"modal_segment_width_px", s.modal_segment_width_px}};

  Csv chars({"text", "jibo", "blocks", "segments"});
  for (const auto& [key, blocks] : ds.characters()) {
    std::size_t uses = 0;
    for (BlockId b : blocks) uses += ds.members(b).size();
    chars.row({key.text, key.jibo.value_or(""), str(blocks.size()), str(uses)});
  }
  write("characters.csv", chars);

  Csv reuse({"block", "count"});
  std::vector<std::size_t> counts;
  json reuse_json = json::array();
  for (const auto& [b, n] : reuse_counts(ds)) {
    reuse.row({str(b.value), str(n)});
    reuse_json.push_back({{"block", b.value}, {"count", n}});
    counts.push_back(n);
  }
  write("reuse.csv", reuse);
  report["reuse"] = std::move(reuse_json);

  Csv zipf({"exponent", "r2", "n_blocks"});
  section(report, "zipf", [&] {
    const auto fit = zipf_fit(counts);
    zipf.row({str(fit.exponent), str(fit.r2), str(counts.size())});
    return json{{"exponent", fit.exponent}, {"r2", fit.r2}, {"n_blocks", counts.size()}};
  });
  write("zipf.csv", zipf);

  Csv dups({"block", "spread", "count"});
  json dup_json = json::array();
  for (const auto& d : same_spread_duplicates(ds)) {
    dups.row({str(d.block.value), str(d.spread.value), str(d.count)});
    dup_json.push_back({{"block", d.block.value}, {"spread", d.spread.value}, {"count", d.count}});
  }
  write("duplicates.csv", dups);
  report["duplicates"] = std::move(dup_json);

  Csv anomalies({"segment", "spread", "score", "area_outlier", "height_off_unit"});
  section(report, "anomalies", [&] {
    AnomalyOptions options;
    options.k = k;
    json list = json::array();
    for (const auto& a : bbox_anomalies(ds, options)) {
      const auto spread = ds.segment(a.segment).spread_id.value;
      anomalies.row({str(a.segment.value), str(spread), str(a.score), str(a.area_outlier), str(a.height_off_unit)});
      list.push_back({{"segment", a.segment.value},
                      {"spread", spread},
                      {"score", a.score},
                      {"area_outlier", a.area_outlier},
                      {"height_off_unit", a.height_off_unit}});
    }
    return json{{"k", k}, {"flagged", std::move(list)}};
  });
  write("anomalies.csv", anomalies);

  const auto matrix = co_appearance(ds);
  Csv co({"i", "j", "value"});
  json triplets = json::array();
  for (std::size_t i = 0; i < matrix.size(); ++i) {
    for (std::size_t j = 0; j < matrix.size(); ++j) {
      if (matrix.at(i, j) == 0) continue;
      co.row({str(matrix.block_ids[i].value), str(matrix.block_ids[j].value), str(matrix.at(i, j))});
      triplets.push_back({matrix.block_ids[i].value, matrix.block_ids[j].value, matrix.at(i, j)});
    }
  }
  write("coappearance.csv", co);
  report["coappearance"] = std::move(triplets);

  const auto graph = spread_graph(ds, min_shared);
  Csv edges({"i", "j", "value"});
  json edge_json = json::array();
  for (const auto& e : graph.edges) {
    edges.row({str(e.u.value), str(e.v.value), str(e.weight)});
    edge_json.push_back({e.u.value, e.v.value, e.weight});
  }
  write("graph.csv", edges);
  report["graph"] = {{"min_shared", min_shared}, {"n_spreads", graph.n_spreads}, {"edges", std::move(edge_json)}};
  section(report, "density", [&] { return json(graph_density(graph)); });

  Csv embed({"block", "x", "y"});
  section(report, "embedding", [&] {
    const auto e = block_embedding(matrix);
    json points = json::array();
    for (std::size_t i = 0; i < e.block_ids.size(); ++i) {
      embed.row({str(e.block_ids[i].value), str(e.coords[i][0]), str(e.coords[i][1])});
      points.push_back({{"block", e.block_ids[i].value}, {"coords", e.coords[i]}});
    }
    return json{{"eigenvalues", e.eigenvalues}, {"points", std::move(points)}};
  });
  write("embedding.csv", embed);

  Csv rhythm({"spread", "line", "position", "units"});
  json rhythm_json = json::array();
  for (const auto& spread : ds.spreads()) {
    for (const auto& line : line_rhythm(ds, spread.id)) {
      for (std::size_t p = 0; p < line.units.size(); ++p) {
        rhythm.row({str(spread.id.value), str(line.line_index), str(p), str(line.units[p])});
      }
      rhythm_json.push_back({{"spread", spread.id.value}, {"line", line.line_index}, {"units", line.units}});
    }
  }
  write("rhythm.csv", rhythm);
  report["rhythm"] = std::move(rhythm_json);

  write_file((out_dir / "report.json").string(), json{{"report", std::move(report)}}.dump(2) + "\n");
}

std::pair<std::string, int> parse_bind(const std::string& bind) {
  const auto colon = bind.rfind(':');
  if (colon == std::string::npos) throw UsageError("--bind expects host:port");
  try {
    std::size_t used = 0;
    const int port = std::stoi(bind.substr(colon + 1), &used);
    if (used != bind.size() - colon - 1 || port < 0 || port > 65535) throw UsageError("bad port in --bind");
    return {bind.substr(0, colon), port};
  } catch (const std::logic_error&) {
    throw UsageError("bad port in --bind");
  }
}

}  // namespace

std::string csv_field(const std::string& value) {
  if (value.find_first_of(",\"\r\n") == std::string::npos) return value;
  std::string out = "\"";
  for (char c : value) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Typographic forensics for movable-type books", "typecase"};
  app.require_subcommand(1);

  std::string dataset, images, bind = "127.0.0.1:8080", out_path, config, ui, adapter = "canonical";
  std::uint64_t seed = 1;
  bool seed_given = false;
  std::int64_t min_shared = 1;
  double k = 3.5;
  bool list_adapters = false;

  auto* validate_cmd = app.add_subcommand("validate", "Check a dataset and print the validation report");
  validate_cmd->add_option("--dataset", dataset, "Dataset file")->required();

  auto* analyze_cmd = app.add_subcommand("analyze", "Write every analytic as CSV plus report.json");
  analyze_cmd->add_option("--dataset", dataset, "Dataset file")->required();
  analyze_cmd->add_option("--out", out_path, "Output directory")->required();
  analyze_cmd->add_option("--min-shared", min_shared, "Shared blocks needed for a spread edge")->check(CLI::PositiveNumber);
  analyze_cmd->add_option("--k", k, "Robust z-score cutoff for anomalies")->check(CLI::PositiveNumber);

  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic book with ground truth");
  synth_cmd->add_option("--out", out_path, "Output directory")->required();
  synth_cmd->add_option("--config", config, "Generator configuration (JSON object)");
  synth_cmd->add_option("--seed", seed, "Seed, overriding the configuration")->each([&](const std::string&) { seed_given = true; });

  auto* serve_cmd = app.add_subcommand("serve", "Serve the HTTP API");
  serve_cmd->add_option("--dataset", dataset, "Dataset file")->required();
  serve_cmd->add_option("--images", images, "Directory of page images");
  serve_cmd->add_option("--bind", bind, "host:port to listen on");
  serve_cmd->add_option("--ui", ui, "Static UI bundle directory");

  auto* export_cmd = app.add_subcommand("export", "Rewrite a dataset in canonical form");
  export_cmd->add_option("--dataset", dataset, "Dataset file")->required();
  export_cmd->add_option("--out", out_path, "Output file (standard output when omitted)");

  auto* convert_cmd = app.add_subcommand("convert", "Import an upstream format through an adapter");
  convert_cmd->add_option("--from", adapter, "Adapter name");
  convert_cmd->add_option("--dataset", dataset, "Input file");
  convert_cmd->add_option("--out", out_path, "Output file (standard output when omitted)");
  convert_cmd->add_flag("--list", list_adapters, "List available adapters");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*validate_cmd) {
      try {
        const auto parsed = load(dataset);
        out << format_report(parsed.report);
        return kExitOk;
      } catch (const DatasetError& e) {
        err << e.what() << "\n";
        if (!e.report().errors.empty()) err << format_report(e.report());
        return kExitInvalid;
      }
    }

    if (*analyze_cmd) {
      analyze(load(dataset), out_path, min_shared, k);
      out << "reports written to " << out_path << "\n";
      return kExitOk;
    }

    if (*synth_cmd) {
      SynthConfig cfg = synth_config(config);
      if (seed_given) cfg.seed = seed;
      const auto book = generate(cfg);
      const fs::path dir(out_path);
      fs::create_directories(dir);
      write_file((dir / "dataset.json").string(), export_dataset(book.dataset));
      write_file((dir / "ground_truth.json").string(), export_ground_truth(book.truth));
      if (!book.pages.empty()) {
        fs::create_directories(dir / "images");
        const PngCodec codec;
        for (std::size_t i = 0; i < book.pages.size(); ++i) {
          const SpreadId id{static_cast<std::int64_t>(i)};
          write_file((dir / "images" / image_name(id)).string(), codec.encode(book.pages[i]));
        }
      }
      out << "wrote " << book.dataset.segments.size() << " segments on " << book.dataset.spreads.size()
          << " spreads to " << out_path << "\n";
      return kExitOk;
    }

    if (*serve_cmd) {
      ParsedDataset parsed;
      try {
        parsed = load(dataset);
      } catch (const DatasetError& e) {
        err << e.what() << "\n";
        if (!e.report().errors.empty()) err << format_report(e.report());
        return kExitInvalid;
      }
      const auto [host, port] = parse_bind(bind);
      std::shared_ptr<const PageSource> pages;
      if (!images.empty()) pages = std::make_shared<ImageStore>(images, std::make_shared<PngCodec>());
      Service service(make_state(std::move(parsed.dataset), std::move(parsed.log)), pages);
      ServerOptions options{host, port, std::nullopt};
      if (!ui.empty()) options.ui_dir = ui;
      HttpServer server(service, options);
      const int bound = server.bind();
      out << "listening on http://" << host << ":" << bound << "/api/summary" << std::endl;
      server.listen();
      return kExitOk;
    }

    if (*export_cmd) {
      const auto parsed = load(dataset);
      const std::string bytes = export_dataset(parsed.dataset, parsed.log);
      if (out_path.empty()) out << bytes;
      else write_file(out_path, bytes);
      return kExitOk;
    }

    if (*convert_cmd) {
      if (list_adapters) {
        for (const auto& [name, fn] : import_adapters()) out << name << "\n";
        return kExitOk;
      }
      if (dataset.empty()) throw UsageError("convert needs --dataset");
      const auto& adapters = import_adapters();
      auto it = adapters.find(adapter);
      if (it == adapters.end()) throw UsageError("unknown adapter '" + adapter + "'");
      if (!fs::exists(dataset)) throw UsageError("input not found: " + dataset);
      const auto parsed = it->second(read_file(dataset));
      const std::string bytes = export_dataset(parsed.dataset, parsed.log);
      if (out_path.empty()) out << bytes;
      else write_file(out_path, bytes);
      return kExitOk;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DatasetError& e) {
    err << e.what() << "\n";
    if (!e.report().errors.empty()) err << format_report(e.report());
    return kExitInvalid;
  } catch (const Error& e) {
    err << to_string(e.code()) << ": " << e.what() << "\n";
    const bool usage = e.code() == ErrorCode::BadRequest || e.code() == ErrorCode::InfeasibleConfig;
    return usage ? kExitUsage : kExitInvalid;
  }
  return kExitUsage;
}

}  // namespace typecase
