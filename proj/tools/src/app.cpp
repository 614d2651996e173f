#include "pmm_cli/app.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "pmm/ale.hpp"
#include "pmm/chain_summary.hpp"
#include "pmm/diagnostics.hpp"
#include "pmm/exact_gaussian.hpp"
#include "pmm/sampler.hpp"
#include "pmm/spqr_io.hpp"
#include "pmm/spqr_train.hpp"
#include "pmm/stats.hpp"
#include "pmm_cli/config.hpp"
#include "pmm_cli/dataset_io.hpp"
#include "pmm_cli/digest.hpp"
#include "pmm_cli/nwis.hpp"

#ifndef PMM_VERSION
#define PMM_VERSION "0.0.0"
#endif

namespace pmm::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------- helpers

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> parse_doubles(const std::string& s, const std::string& what) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw InvalidArgument("cannot parse " + what + " value '" + item + "'");
    }
  }
  return out;
}

std::vector<std::size_t> parse_hidden(const std::string& s) {
  if (s.empty() || s == "0" || s == "none") return {};
  std::vector<std::size_t> out;
  for (double v : parse_doubles(s, "hidden")) {
    require(v >= 1.0 && v == std::floor(v), "hidden layer sizes must be positive integers (0 for none)");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

NeighborScale parse_scale(const std::string& s) {
  if (s == "uniform") return NeighborScale::uniform;
  if (s == "normal") return NeighborScale::normal;
  throw InvalidArgument("unknown neighbour scale '" + s + "' (uniform, normal)");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  out << text;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifact("cannot read " + path.string());
  return json::parse(in);
}

struct Context {
  std::ostream& out;
  std::ostream& err;
  std::string command;
  std::string snapshot;
  std::string config_hash;
};

void write_snapshot(const Context& ctx, const fs::path& dir, const std::string& stem) {
  write_text(dir / (stem + ".ini"), "[" + ctx.command + "]\n" + ctx.snapshot);
}

json manifest_base(const Context& ctx) {
  return {{"command", ctx.command}, {"version", PMM_VERSION}, {"config_hash", ctx.config_hash}};
}

void write_manifest(const fs::path& path, const json& m) { write_text(path, m.dump(2) + "\n"); }

// ---------------------------------------------------------------- data

struct DataOpts {
  std::string dir = ".";
  std::string data;
  std::string coordinates = "auto";
  std::optional<double> power;
  std::optional<double> censor;
};

void add_data_options(CLI::App* app, DataOpts& o) {
  app->add_option("--dir", o.dir, "pipeline directory")->capture_default_str();
  app->add_option("--data", o.data, "station CSV (default <dir>/data.csv)");
  app->add_option("--coordinates", o.coordinates, "auto, lonlat, planar or unit")->capture_default_str();
  app->add_option("--power", o.power, "power transform of flows, 0 = log");
  app->add_option("--censor", o.censor, "censoring threshold on the transformed scale");
}

fs::path sidecar(const fs::path& data) { return data.parent_path() / (data.stem().string() + ".meta.json"); }

struct Loaded {
  Dataset data;
  fs::path path;
  PowerTransform transform;
  Coordinates coordinates = Coordinates::lonlat;
  TimeCovariate x;
};

Loaded load_data(const DataOpts& o, const Context& ctx) {
  Loaded l;
  l.path = o.data.empty() ? fs::path(o.dir) / "data.csv" : fs::path(o.data);
  if (!fs::exists(l.path)) {
    throw MissingArtifact("no dataset at " + l.path.string() + "; run `pmm simulate` or `pmm fetch` first");
  }
  json meta = json::object();
  if (fs::exists(sidecar(l.path))) meta = read_json(sidecar(l.path));
  l.coordinates = o.coordinates != "auto" ? parse_coordinates(o.coordinates)
                                          : parse_coordinates(meta.value("coordinates", std::string("lonlat")));
  l.transform.power = o.power ? *o.power : meta.value("power", 0.0);
  IngestOptions opt{l.transform, l.coordinates, o.censor};
  IngestReport report;
  l.data = ingest_csv(l.path, opt, &report);
  l.x = TimeCovariate::from_years(l.data.years);
  ctx.err << "data: " << l.data.n_sites() << " sites x " << l.data.n_years() << " years ("
          << l.data.years.front() << "-" << l.data.years.back() << "), " << report.missing_cells
          << " missing cells";
  if (l.data.censor_threshold) ctx.err << ", " << l.data.count(CellStatus::censored) << " censored";
  ctx.err << "\n";
  return l;
}

NeighborGraph layout_graph(const SiteSet& sites, std::size_t m) {
  return build_neighbor_sets(sites, order_sites(sites), m);
}

fs::path bundle_path(const std::string& dir, const std::string& model) {
  return fs::path(dir) / "nets" / (model + ".json");
}

NetBundle load_nets(const fs::path& path, const std::string& model) {
  if (!fs::exists(path)) {
    throw MissingArtifact("no trained nets at " + path.string() + "; run `pmm train --model " + model + "` first");
  }
  return load_bundle(path);
}

void check_layout(const NetBundle& b, const NeighborGraph& g, const SiteSet& sites) {
  bool ok = b.site_order.size() == g.size();
  for (std::size_t p = 0; ok && p < g.size(); ++p) ok = b.site_order[p] == sites.ids[g.order[p]];
  if (!ok) throw InvalidArgument("nets were trained on a different site layout; rerun `pmm train`");
}

std::unique_ptr<ConditionalModel> make_conditionals(const NetBundle& b, const SiteSet& sites) {
  auto g = layout_graph(sites, b.max_neighbors);
  check_layout(b, g, sites);
  if (b.global) return std::make_unique<SpqrConditionals>(g, b.spatial, b.models.at(0), sites);
  return std::make_unique<SpqrConditionals>(g, b.spatial, b.models);
}

json spatial_json(const SpatialModel& m) {
  return {{"variant", to_string(m.variant)}, {"alpha", m.alpha}, {"free_r", m.free_r}, {"fixed_r", m.fixed_r}};
}

SpatialModel spatial_from(const json& j) {
  SpatialModel m;
  m.variant = parse_variant(j.at("variant").get<std::string>());
  m.alpha = j.at("alpha").get<double>();
  m.free_r = j.at("free_r").get<bool>();
  m.fixed_r = j.at("fixed_r").get<double>();
  return m;
}

// ---------------------------------------------------------------- simulate

struct SimulateOpts {
  std::string dir = ".";
  std::string model = "pmm";
  std::size_t n_sites = 50;
  std::size_t reps = 50;
  double delta = 0.5;
  double rho = 0.15;
  double alpha = 1.0;
  double r = 1.0;
  int first_year = 1972;
  double mu = 0.0, sigma = 1.0, xi = 0.0;
  double power = 0.0;
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

int cmd_simulate(const SimulateOpts& o, const Context& ctx) {
  require(o.n_sites >= 2, "--n-sites must be at least 2");
  require(o.reps >= 1, "--reps must be positive");
  const auto variant = parse_variant(o.model);
  const auto params = tied_params(o.delta, o.rho, o.alpha, o.r);
  params.validate();
  const GevParams margin{o.mu, o.sigma, o.xi};
  require(o.sigma > 0.0, "--sigma must be positive");

  Rng rng(o.seed, 0, 11);
  std::vector<Point2> pts(o.n_sites);
  for (auto& p : pts) p = {rng.uniform(), rng.uniform()};
  const int width = static_cast<int>(std::to_string(o.n_sites).size());
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < o.n_sites; ++i) {
    std::ostringstream id;
    id << 'S' << std::setw(width) << std::setfill('0') << i + 1;
    ids.push_back(id.str());
  }
  const auto sites = SiteSet::unit_square(pts, ids);
  const auto batch = simulate_batch(variant, sites, params, o.reps, o.seed, o.threads);

  const PowerTransform transform{o.power};
  std::vector<StationRecord> rows;
  for (std::size_t i = 0; i < o.n_sites; ++i) {
    for (std::size_t t = 0; t < o.reps; ++t) {
      const double flow = transform.inverse(gev_quantile(batch[t].u[i], margin));
      if (!(std::isfinite(flow) && flow > 0.0)) {
        throw NumericError("simulated value outside the range of the power transform; use --power 0");
      }
      rows.push_back({ids[i], pts[i].x, pts[i].y, o.first_year + static_cast<int>(t), flow});
    }
  }

  const fs::path dir(o.dir);
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "data.csv");
    write_station_csv(out, rows);
  }
  {
    std::ofstream out(dir / "fields.csv");
    write_batch_csv(out, sites, batch);
  }
  json meta = {{"coordinates", "unit"},
               {"power", o.power},
               {"model", o.model},
               {"params", {{"delta", params.delta}, {"rho_w", params.rho_w}, {"rho_r", params.rho_r},
                           {"alpha", o.alpha}, {"r", params.r}}},
               {"margins", {{"mu", o.mu}, {"sigma", o.sigma}, {"xi", o.xi}}},
               {"seed", o.seed}};
  write_manifest(sidecar(dir / "data.csv"), meta);
  write_snapshot(ctx, dir, "simulate");
  auto m = manifest_base(ctx);
  m["seed"] = o.seed;
  m["outputs"] = {{"data.csv", file_sha256(dir / "data.csv")}, {"fields.csv", file_sha256(dir / "fields.csv")}};
  write_manifest(dir / "simulate.manifest.json", m);
  ctx.out << "simulated " << o.model << ": " << o.n_sites << " sites x " << o.reps << " replicates -> "
          << (dir / "data.csv").string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------- train

struct TrainOpts {
  DataOpts data;
  std::string model = "pmm";
  std::string out;
  std::size_t neighbors = 15;
  std::string hidden = "30,15";
  std::size_t knots = 15;
  int degree = 3;
  std::size_t epochs = 50;
  std::size_t samples = 100000;
  std::size_t batch = 100;
  double lr = 1e-3;
  double validation = 0.2;
  std::string activation = "relu";
  std::size_t ensemble = 1;
  std::string scale = "uniform";
  double alpha = 1.0;
  bool free_r = false;
  double r = 1.0;
  double delta_lo = 0.0, delta_hi = 1.0;
  double rho_lo = 0.0, rho_hi = 0.5;
  double r_lo = 0.0, r_hi = 1.0;
  bool global = false;
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

int cmd_train(const TrainOpts& o, const Context& ctx) {
  const auto loaded = load_data(o.data, ctx);
  const auto& sites = loaded.data.sites;
  const SpatialModel spatial{parse_variant(o.model), o.alpha, o.free_r, o.r};
  DesignDistribution design{o.delta_lo, o.delta_hi, o.rho_lo, o.rho_hi, o.r_lo, o.r_hi};
  design.validate();
  TrainConfig cfg;
  cfg.samples = o.samples;
  cfg.batch = o.batch;
  cfg.epochs = o.epochs;
  cfg.learning_rate = o.lr;
  cfg.validation = o.validation;
  cfg.hidden = parse_hidden(o.hidden);
  cfg.activation = parse_activation(o.activation);
  cfg.knots = o.knots;
  cfg.degree = o.degree;
  cfg.scale = parse_scale(o.scale);
  cfg.ensemble = o.ensemble;
  cfg.seed = o.seed;
  cfg.validate();

  const auto graph = layout_graph(sites, o.neighbors);
  NetBundle b;
  b.global = o.global;
  b.spatial = spatial;
  b.max_neighbors = o.neighbors;
  for (std::size_t p = 0; p < graph.size(); ++p) b.site_order.push_back(sites.ids[graph.order[p]]);
  std::vector<TrainReport> reports;
  if (o.global) {
    reports.resize(1);
    b.models.push_back(train_global(sites, graph, spatial, design, cfg, &reports[0], o.threads));
  } else {
    b.models = train_all_local(sites, graph, spatial, design, cfg, o.threads, &reports);
  }
  b.meta = {{"hidden", join(cfg.hidden)}, {"knots", std::to_string(cfg.knots)},
            {"epochs", std::to_string(cfg.epochs)}, {"samples", std::to_string(cfg.samples)},
            {"seed", std::to_string(cfg.seed)}, {"scale", o.scale},
            {"delta_lo", std::to_string(design.delta_lo)}, {"delta_hi", std::to_string(design.delta_hi)},
            {"rho_lo", std::to_string(design.rho_lo)}, {"rho_hi", std::to_string(design.rho_hi)},
            {"r_lo", std::to_string(design.r_lo)}, {"r_hi", std::to_string(design.r_hi)}};

  const auto path = o.out.empty() ? bundle_path(o.data.dir, o.model) : fs::path(o.out);
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  save_bundle(path, b);
  const auto report_path = path.parent_path() / (path.stem().string() + "_validation.csv");
  {
    std::ofstream out(report_path);
    out << "position,site_id,neighbors,best_epoch,best_valid,final_train,clamped,seconds\n";
    out << std::setprecision(10);
    for (std::size_t k = 0; k < reports.size(); ++k) {
      const auto& r = reports[k];
      if (r.train_loss.empty()) continue;
      const std::size_t pos = o.global ? 0 : k;
      out << (o.global ? std::string("all") : std::to_string(pos)) << ','
          << (o.global ? std::string("all") : b.site_order[pos]) << ','
          << (o.global ? o.neighbors : graph.neighbors[pos].size()) << ',' << r.best_epoch << ','
          << r.best_valid << ',' << r.train_loss.back() << ',' << r.clamped << ',' << r.seconds << '\n';
    }
  }
  write_snapshot(ctx, path.parent_path(), "train_" + path.stem().string());
  auto m = manifest_base(ctx);
  m["seed"] = o.seed;
  m["spatial"] = spatial_json(spatial);
  m["inputs"] = {{loaded.path.string(), file_sha256(loaded.path)}};
  m["outputs"] = {{path.filename().string(), file_sha256(path)},
                  {report_path.filename().string(), file_sha256(report_path)}};
  write_manifest(path.parent_path() / (path.stem().string() + ".manifest.json"), m);

  double valid = 0.0;
  std::size_t n = 0;
  for (const auto& r : reports) {
    if (r.train_loss.empty()) continue;
    valid += r.best_valid;
    ++n;
  }
  ctx.out << "trained " << n << (o.global ? " global" : " local") << " net(s) ["
          << (cfg.hidden.empty() ? std::string("linear") : join(cfg.hidden)) << "], mean validation NLL "
          << (n ? valid / static_cast<double>(n) : 0.0) << " -> " << path.string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------- fit

struct FitOpts {
  DataOpts data;
  std::string model = "pmm";
  std::string nets;
  bool exact = false;
  std::size_t neighbors = 15;
  std::string margins = "stvc";
  double mu = 0.0, sigma = 1.0, xi = 0.0;
  std::size_t iterations = 11000;
  std::size_t burn_in = 1000;
  std::size_t thin = 10;
  std::size_t chains = 2;
  double rho_max = 0.5;
  bool pointwise = false;
  bool prior_only = false;
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

fs::path chain_dir(const std::string& dir, const std::string& model) {
  return fs::path(dir) / "chains" / model;
}

void print_summary(std::ostream& out, std::span<const ParamSummary> rows, std::size_t count) {
  out << std::left << std::setw(12) << "parameter" << std::right;
  for (const char* h : {"mean", "sd", "q025", "q500", "q975", "rhat", "ess"}) out << std::setw(10) << h;
  out << "\n";
  for (std::size_t k = 0; k < count && k < rows.size(); ++k) {
    const auto& r = rows[k];
    out << std::left << std::setw(12) << r.name << std::right << std::fixed << std::setprecision(4);
    for (double v : {r.mean, r.sd, r.q025, r.q500, r.q975, r.rhat}) out << std::setw(10) << v;
    out << std::setw(10) << std::setprecision(0) << r.ess << "\n";
    out.unsetf(std::ios::floatfield);
    out << std::setprecision(6);
  }
}

int cmd_fit(const FitOpts& o, const Context& ctx) {
  const auto loaded = load_data(o.data, ctx);
  const auto& data = loaded.data;
  std::unique_ptr<ConditionalModel> model;
  json inputs = {{loaded.path.string(), file_sha256(loaded.path)}};
  fs::path nets_path;
  if (o.exact) {
    require(o.model == "gp", "--exact is available for the gp model only");
    const SpatialModel spatial{ModelVariant::gp, 1.0, true, 1.0};
    model = std::make_unique<GaussianConditionals>(layout_graph(data.sites, o.neighbors), spatial, data.sites);
  } else {
    nets_path = o.nets.empty() ? bundle_path(o.data.dir, o.model) : fs::path(o.nets);
    const auto bundle = load_nets(nets_path, o.model);
    require(to_string(bundle.spatial.variant) == o.model,
            "nets at " + nets_path.string() + " were trained for model " + to_string(bundle.spatial.variant));
    model = make_conditionals(bundle, data.sites);
    inputs[nets_path.string()] = file_sha256(nets_path);
  }

  SamplerConfig cfg;
  cfg.iterations = o.iterations;
  cfg.burn_in = o.burn_in;
  cfg.thin = o.thin;
  cfg.chains = o.chains;
  cfg.seed = o.seed;
  cfg.threads = o.threads;
  cfg.margins = parse_margin_mode(o.margins);
  cfg.use_likelihood = !o.prior_only;
  cfg.store_pointwise = o.pointwise;
  if (o.chains != 2) {
    cfg.delta_starts.clear();
    for (std::size_t c = 0; c < o.chains; ++c) {
      cfg.delta_starts.push_back(o.chains == 1 ? 0.5 : 0.1 + 0.8 * static_cast<double>(c) / static_cast<double>(o.chains - 1));
    }
  }
  const GevSiteParams known{o.mu, 0.0, std::log(o.sigma), o.xi};
  if (cfg.margins == MarginMode::fixed) {
    require(o.sigma > 0.0, "--sigma must be positive");
    cfg.fixed_margins = MarginalState{std::vector<GevSiteParams>(data.n_sites(), known)};
  }
  PriorSpec prior;
  prior.rho_max = o.rho_max;
  cfg.validate();

  const auto chains = run_chains(cfg, data, *model, loaded.x, prior);
  const auto summary = summarize(chains);

  const auto dir = chain_dir(o.data.dir, o.model);
  fs::create_directories(dir);
  json chain_list = json::array();
  json outputs = json::object();
  for (std::size_t c = 0; c < chains.size(); ++c) {
    const auto name = "chain_" + std::to_string(c + 1) + ".csv";
    {
      std::ofstream out(dir / name);
      write_chain_csv(out, chains[c]);
    }
    outputs[name] = file_sha256(dir / name);
    json acc = json::object();
    for (const auto& [block, ap] : chains[c].acceptance) acc[block] = {ap.first, ap.second};
    json entry = {{"file", name}, {"seed", chains[c].seed}, {"delta_start", chains[c].delta_start},
                  {"acceptance", acc}, {"audits", chains[c].audits}};
    if (o.pointwise) {
      const auto pw = "pointwise_" + std::to_string(c + 1) + ".csv";
      std::ofstream out(dir / pw);
      out << std::setprecision(12);
      const auto& P = chains[c].pointwise;
      for (Eigen::Index r = 0; r < P.rows(); ++r) {
        for (Eigen::Index k = 0; k < P.cols(); ++k) out << (k ? "," : "") << P(r, k);
        out << '\n';
      }
      out.close();
      entry["pointwise"] = pw;
      outputs[pw] = file_sha256(dir / pw);
    }
    chain_list.push_back(entry);
  }
  {
    std::ofstream out(dir / "summary.csv");
    write_summary_csv(out, summary);
  }
  write_snapshot(ctx, dir, "fit");
  auto m = manifest_base(ctx);
  m["seed"] = o.seed;
  m["model"] = o.model;
  m["exact"] = o.exact;
  m["neighbors"] = o.neighbors;
  m["nets"] = nets_path.string();
  m["spatial"] = spatial_json(model->spatial());
  m["margin_mode"] = o.margins;
  m["fixed_margins"] = {{"mu", o.mu}, {"sigma", o.sigma}, {"xi", o.xi}};
  m["theta_size"] = chains.front().theta_size;
  m["n_sites"] = data.n_sites();
  m["chains"] = chain_list;
  m["inputs"] = inputs;
  m["outputs"] = outputs;
  write_manifest(dir / "manifest.json", m);

  ctx.out << "fit " << o.model << " (" << o.margins << " margins), " << chains.size() << " chains, "
          << chains.front().draws.rows() << " stored draws each -> " << dir.string() << "\n";
  print_summary(ctx.out, summary, chains.front().theta_size);
  return kOk;
}

// Fitted chains plus what is needed to interpret them.
struct FitRun {
  json manifest;
  fs::path dir;
  std::vector<ChainOutput> chains;
  SpatialModel spatial;
  std::optional<MarginalState> fixed;
};

FitRun load_fit(const std::string& dir, const std::string& model, std::size_t n_sites) {
  FitRun f;
  f.dir = chain_dir(dir, model);
  if (!fs::exists(f.dir / "manifest.json")) {
    throw MissingArtifact("no chains for model " + model + " under " + f.dir.string() + "; run `pmm fit --model " +
                          model + "` first");
  }
  f.manifest = read_json(f.dir / "manifest.json");
  f.spatial = spatial_from(f.manifest.at("spatial"));
  const auto mode = parse_margin_mode(f.manifest.at("margin_mode").get<std::string>());
  require(f.manifest.at("n_sites").get<std::size_t>() == n_sites, "chains were fitted to a different dataset");
  if (mode == MarginMode::fixed) {
    const auto& fm = f.manifest.at("fixed_margins");
    f.fixed = MarginalState{std::vector<GevSiteParams>(
        n_sites, GevSiteParams{fm.at("mu").get<double>(), 0.0, std::log(fm.at("sigma").get<double>()), fm.at("xi").get<double>()})};
  }
  for (const auto& c : f.manifest.at("chains")) {
    std::ifstream in(f.dir / c.at("file").get<std::string>());
    if (!in) throw MissingArtifact("missing chain file in " + f.dir.string() + "; rerun `pmm fit`");
    auto out = read_chain_csv(in);
    out.theta_size = f.manifest.at("theta_size").get<std::size_t>();
    out.margin_mode = mode;
    out.n_sites = n_sites;
    out.seed = c.at("seed").get<std::uint64_t>();
    out.delta_start = c.at("delta_start").get<double>();
    f.chains.push_back(std::move(out));
  }
  require(!f.chains.empty(), "manifest lists no chains");
  return f;
}

std::unique_ptr<ConditionalModel> conditionals_for(const FitRun& f, const Dataset& data) {
  if (f.manifest.value("exact", false)) {
    return std::make_unique<GaussianConditionals>(layout_graph(data.sites, f.manifest.at("neighbors").get<std::size_t>()),
                                                  f.spatial, data.sites);
  }
  const fs::path nets = f.manifest.at("nets").get<std::string>();
  return make_conditionals(load_nets(nets, to_string(f.spatial.variant)), data.sites);
}

std::vector<double> posterior_mean_theta(const FitRun& f) {
  const auto n = f.chains.front().theta_size;
  std::vector<double> theta(n, 0.0);
  double count = 0.0;
  for (const auto& c : f.chains) {
    for (Eigen::Index r = 0; r < c.draws.rows(); ++r) {
      for (std::size_t k = 0; k < n; ++k) theta[k] += c.draws(r, static_cast<Eigen::Index>(k));
      count += 1.0;
    }
  }
  for (auto& v : theta) v /= count;
  return theta;
}

MarginalState posterior_mean_margins(const FitRun& f) {
  MarginalState acc;
  double count = 0.0;
  for (const auto& c : f.chains) {
    for (Eigen::Index r = 0; r < c.draws.rows(); ++r) {
      const auto m = c.margins_at(static_cast<std::size_t>(r), f.fixed ? &*f.fixed : nullptr);
      if (acc.sites.empty()) acc.sites.assign(m.sites.size(), GevSiteParams{0.0, 0.0, 0.0, 0.0});
      for (std::size_t i = 0; i < m.sites.size(); ++i) {
        acc.sites[i].mu0 += m.sites[i].mu0;
        acc.sites[i].mu1 += m.sites[i].mu1;
        acc.sites[i].log_sigma += m.sites[i].log_sigma;
        acc.sites[i].xi += m.sites[i].xi;
      }
      count += 1.0;
    }
  }
  for (auto& s : acc.sites) {
    s.mu0 /= count;
    s.mu1 /= count;
    s.log_sigma /= count;
    s.xi /= count;
  }
  return acc;
}

// ---------------------------------------------------------------- diagnose

struct DiagnoseOpts {
  DataOpts data;
  std::string model = "pmm";
  std::string levels = "0.9,0.95,0.99";
  std::size_t bins = 20;
  std::size_t model_reps = 500;
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

void write_tidy(const fs::path& path, std::vector<TidyRow> rows) {
  std::ofstream out(path);
  write_tidy_csv(out, rows);
}

int cmd_diagnose(const DiagnoseOpts& o, const Context& ctx) {
  const auto loaded = load_data(o.data, ctx);
  const auto& data = loaded.data;
  const auto fit = load_fit(o.data.dir, o.model, data.n_sites());
  const auto summary = summarize(fit.chains);
  const auto theta = posterior_mean_theta(fit);
  const auto margins = posterior_mean_margins(fit);
  const auto levels = parse_doubles(o.levels, "levels");
  const auto edges = default_bins(data.sites.scaled, o.bins);

  const auto dir = fs::path(o.data.dir) / "diag" / o.model;
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "summary.csv");
    write_summary_csv(out, summary);
  }

  auto chi_data = empirical_chi(data.y, data.sites.scaled, levels, edges);
  const auto sims = simulate_batch(fit.spatial.variant, data.sites, fit.spatial.params(theta), o.model_reps,
                                   o.seed, o.threads);
  Eigen::MatrixXd panel(static_cast<Eigen::Index>(data.n_sites()), static_cast<Eigen::Index>(sims.size()));
  for (std::size_t t = 0; t < sims.size(); ++t)
    for (std::size_t i = 0; i < data.n_sites(); ++i) panel(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = sims[t].u[i];
  auto chi_model = empirical_chi(panel, data.sites.scaled, levels, edges);
  std::vector<TidyRow> chi_rows;
  for (auto r : tidy(chi_data)) {
    r.estimator = "chi_data";
    chi_rows.push_back(r);
  }
  for (auto r : tidy(chi_model)) {
    r.estimator = "chi_model";
    chi_rows.push_back(r);
  }
  write_tidy(dir / "chi.csv", chi_rows);

  auto vg = variogram(data.y, data.sites.scaled, edges);
  write_tidy(dir / "variogram.csv", tidy(vg));

  const auto model = conditionals_for(fit, data);
  const auto uniform = to_uniform(data, margins, loaded.x);
  auto pit = pit_values(uniform.u, theta, *model);
  std::erase_if(pit, [](double p) { return !std::isfinite(p); });
  std::vector<std::string> warnings = chi_data.warnings;
  warnings.insert(warnings.end(), vg.warnings.begin(), vg.warnings.end());
  if (pit.size() >= 2) {
    write_tidy(dir / "pit.csv", tidy(pit_and_qq(pit)));
  } else {
    warnings.push_back("too few complete cells for PIT diagnostics");
  }

  std::vector<Eigen::MatrixXd> blocks;
  for (const auto& c : fit.manifest.at("chains")) {
    if (!c.contains("pointwise")) continue;
    std::ifstream in(fit.dir / c.at("pointwise").get<std::string>());
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      rows.push_back(parse_doubles(line, "pointwise"));
    }
    if (rows.empty()) continue;
    Eigen::MatrixXd b(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t k = 0; k < rows[r].size(); ++k) b(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = rows[r][k];
    blocks.push_back(std::move(b));
  }
  if (!blocks.empty()) {
    Eigen::Index total = 0;
    for (const auto& b : blocks) total += b.rows();
    Eigen::MatrixXd ll(total, blocks.front().cols());
    Eigen::Index at = 0;
    for (const auto& b : blocks) {
      ll.middleRows(at, b.rows()) = b;
      at += b.rows();
    }
    const auto s = waic_and_loo(ll);
    write_tidy(dir / "scores.csv", tidy(s, o.model));
    ctx.out << "WAIC " << s.waic << " (se " << s.waic_se << "), LOOIC " << s.looic << " (se " << s.loo_se << ")\n";
  }

  for (const auto& w : warnings) ctx.err << "warning: " << w << "\n";
  write_snapshot(ctx, dir, "diagnose");
  auto m = manifest_base(ctx);
  m["seed"] = o.seed;
  m["inputs"] = {{loaded.path.string(), file_sha256(loaded.path)},
                 {(fit.dir / "manifest.json").string(), file_sha256(fit.dir / "manifest.json")}};
  write_manifest(dir / "diagnose.manifest.json", m);

  ctx.out << "posterior summary (" << o.model << "):\n";
  print_summary(ctx.out, summary, fit.chains.front().theta_size);
  ctx.out << "diagnostics -> " << dir.string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------- exceedance

struct ExceedanceOpts {
  DataOpts data;
  std::string model = "pmm";
  std::string cluster;
  std::optional<int> year_a, year_b;
  double level = 0.95;
  std::size_t draws = 200;
  std::size_t sims = 10000;
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

int cmd_exceedance(const ExceedanceOpts& o, const Context& ctx) {
  const auto loaded = load_data(o.data, ctx);
  const auto& data = loaded.data;
  const auto fit = load_fit(o.data.dir, o.model, data.n_sites());
  require(o.level > 0.0 && o.level < 1.0, "--level must lie in (0, 1)");

  const auto ids = split_list(o.cluster);
  require(!ids.empty(), "--cluster needs at least one site id");
  std::vector<std::size_t> idx;
  std::vector<Point2> pts;
  std::vector<double> q;
  for (const auto& id : ids) {
    const auto it = std::find(data.sites.ids.begin(), data.sites.ids.end(), id);
    require(it != data.sites.ids.end(), "unknown site id '" + id + "'");
    const auto i = static_cast<std::size_t>(it - data.sites.ids.begin());
    idx.push_back(i);
    pts.push_back(data.sites.scaled[i]);
    std::vector<double> obs;
    for (std::size_t t = 0; t < data.n_years(); ++t)
      if (data.cell(i, t) == CellStatus::observed) obs.push_back(data.y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)));
    require(!obs.empty(), "site " + id + " has no observed years");
    q.push_back(sample_quantile(obs, o.level));
  }
  auto year_index = [&](int year) {
    const auto it = std::find(data.years.begin(), data.years.end(), year);
    require(it != data.years.end(), "year " + std::to_string(year) + " is outside the data");
    return static_cast<std::size_t>(it - data.years.begin());
  };
  const int ya = o.year_a.value_or(data.years.front());
  const int yb = o.year_b.value_or(data.years.back());
  const auto ta = year_index(ya), tb = year_index(yb);

  std::vector<std::pair<std::size_t, std::size_t>> pooled;
  for (std::size_t c = 0; c < fit.chains.size(); ++c)
    for (Eigen::Index r = 0; r < fit.chains[c].draws.rows(); ++r) pooled.emplace_back(c, static_cast<std::size_t>(r));
  const auto use = std::min(o.draws, pooled.size());
  require(use > 0, "no posterior draws");
  std::vector<ExceedanceDraw> draws;
  for (std::size_t k = 0; k < use; ++k) {
    const auto [c, r] = pooled[k * pooled.size() / use];
    const auto& ch = fit.chains[c];
    const auto margins = ch.margins_at(r, fit.fixed ? &*fit.fixed : nullptr);
    ExceedanceDraw d;
    d.theta = ch.theta_at(r);
    for (auto i : idx) {
      d.margins_a.push_back(margins.at(i, ta, loaded.x));
      d.margins_b.push_back(margins.at(i, tb, loaded.x));
    }
    draws.push_back(std::move(d));
  }
  const auto report = joint_exceedance(draws, fit.spatial, pts, q, o.sims, o.seed, o.threads);

  const auto dir = fs::path(o.data.dir) / "diag" / o.model;
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "exceedance.csv");
    out << "draw,prob_a,prob_b\n" << std::setprecision(10);
    for (std::size_t k = 0; k < report.prob_a.size(); ++k) out << k + 1 << ',' << report.prob_a[k] << ',' << report.prob_b[k] << '\n';
  }
  {
    std::ofstream out(dir / "exceedance_summary.csv");
    out << "year_a,year_b,sites,level,mean_a,sd_a,mean_b,sd_b,prob_b_greater\n" << std::setprecision(10);
    out << ya << ',' << yb << ',' << ids.size() << ',' << o.level << ',' << report.mean_a << ',' << report.sd_a << ','
        << report.mean_b << ',' << report.sd_b << ',' << report.prob_b_greater << '\n';
  }
  write_snapshot(ctx, dir, "exceedance");
  auto m = manifest_base(ctx);
  m["seed"] = o.seed;
  m["inputs"] = {{loaded.path.string(), file_sha256(loaded.path)},
                 {(fit.dir / "manifest.json").string(), file_sha256(fit.dir / "manifest.json")}};
  write_manifest(dir / "exceedance.manifest.json", m);

  ctx.out << "joint exceedance over " << ids.size() << " sites at the " << o.level << " quantile, " << use << " draws\n"
          << "  " << ya << ": mean " << report.mean_a << " sd " << report.sd_a << "\n"
          << "  " << yb << ": mean " << report.mean_b << " sd " << report.sd_b << "\n"
          << "  Pr[p_" << yb << " > p_" << ya << "] = " << report.prob_b_greater << "\n";
  return kOk;
}

// ---------------------------------------------------------------- compare

struct CompareOpts {
  std::string dir = ".";
  std::string models = "pmm,hw,msp,gp";
  double truncation = 0.999;
};

Eigen::MatrixXd read_pointwise(const fs::path& dir, const json& manifest, const std::string& model) {
  std::vector<std::vector<double>> rows;
  for (const auto& c : manifest.at("chains")) {
    if (!c.contains("pointwise")) {
      throw MissingArtifact("chains for model " + model + " have no pointwise log-likelihood; run `pmm fit --model " +
                            model + " --pointwise`");
    }
    std::ifstream in(dir / c.at("pointwise").get<std::string>());
    if (!in) throw MissingArtifact("missing pointwise file for model " + model + "; rerun `pmm fit --pointwise`");
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty()) rows.push_back(parse_doubles(line, "pointwise"));
    }
  }
  require(!rows.empty(), "pointwise file for model " + model + " is empty");
  Eigen::MatrixXd ll(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    require(rows[r].size() == rows[0].size(), "ragged pointwise file for model " + model);
    for (std::size_t k = 0; k < rows[r].size(); ++k) ll(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = rows[r][k];
  }
  return ll;
}

int cmd_compare(const CompareOpts& o, const Context& ctx) {
  const auto models = split_list(o.models);
  require(!models.empty(), "--models is empty");
  std::vector<std::pair<std::string, ScoreReport>> scores;
  std::vector<TidyRow> rows;
  Eigen::Index cells = -1;
  json inputs = json::object();
  for (const auto& name : models) {
    parse_variant(name);
    const auto dir = chain_dir(o.dir, name);
    if (!fs::exists(dir / "manifest.json")) {
      throw MissingArtifact("no chains for model " + name + "; run `pmm fit --model " + name + " --pointwise` first");
    }
    const auto manifest = read_json(dir / "manifest.json");
    const auto ll = read_pointwise(dir, manifest, name);
    if (cells >= 0) require(ll.cols() == cells, "models were fitted to different data (cell counts differ)");
    cells = ll.cols();
    const auto s = waic_and_loo(ll, o.truncation);
    auto t = tidy(s, name);
    rows.insert(rows.end(), t.begin(), t.end());
    scores.emplace_back(name, s);
    inputs[(dir / "manifest.json").string()] = file_sha256(dir / "manifest.json");
  }
  const auto diag = fs::path(o.dir) / "diag";
  fs::create_directories(diag);
  write_tidy(diag / "compare.csv", rows);
  write_snapshot(ctx, diag, "compare");
  auto m = manifest_base(ctx);
  m["inputs"] = inputs;
  write_manifest(diag / "compare.manifest.json", m);

  std::sort(scores.begin(), scores.end(), [](const auto& a, const auto& b) { return a.second.waic < b.second.waic; });
  ctx.out << std::left << std::setw(8) << "model" << std::right;
  for (const char* h : {"waic", "se", "p_waic", "looic", "se", "p_loo"}) ctx.out << std::setw(12) << h;
  ctx.out << "\n" << std::fixed << std::setprecision(2);
  for (const auto& [name, s] : scores) {
    ctx.out << std::left << std::setw(8) << name << std::right;
    for (double v : {s.waic, s.waic_se, s.p_waic, s.looic, s.loo_se, s.p_loo}) ctx.out << std::setw(12) << v;
    ctx.out << "\n";
  }
  ctx.out.unsetf(std::ios::floatfield);
  return kOk;
}

// ---------------------------------------------------------------- spqr inspect

struct InspectOpts {
  DataOpts data;
  std::string bundle;
  std::string model = "pmm";
  std::string out;
  bool vi = false;
  std::string taus = "0.1,0.5,0.9";
  std::size_t reference = 1000;
  std::size_t bins = 20;
  std::string positions;
  std::uint64_t seed = 1;
};

std::size_t parameter_count(const SpqrModel& m) {
  std::size_t n = 0;
  for (const auto& net : m.nets())
    for (const auto& l : net.layers()) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

double meta_double(const NetBundle& b, const std::string& key, double fallback) {
  const auto it = b.meta.find(key);
  return it == b.meta.end() ? fallback : std::stod(it->second);
}

int cmd_inspect(const InspectOpts& o, const Context& ctx) {
  const auto path = o.bundle.empty() ? bundle_path(o.data.dir, o.model) : fs::path(o.bundle);
  const auto b = load_nets(path, o.model);
  std::ofstream file;
  if (!o.out.empty()) {
    file.open(o.out);
    if (!file) throw InvalidArgument("cannot write " + o.out);
  }
  std::ostream& out = o.out.empty() ? ctx.out : file;

  out << "position,site_id,variant,features,feature_names,hidden,activation,knots,degree,ensemble,parameters\n";
  for (std::size_t k = 0; k < b.models.size(); ++k) {
    const auto& m = b.models[k];
    if (m.nets().empty()) continue;
    const auto& net = m.nets().front();
    std::vector<std::size_t> hidden(net.sizes().begin() + 1, net.sizes().end() - 1);
    std::string names;
    for (const auto& n : m.layout().names()) names += (names.empty() ? "" : ";") + n;
    out << (b.global ? std::string("all") : std::to_string(k)) << ','
        << (b.global ? std::string("all") : b.site_order[k]) << ',' << to_string(b.spatial.variant) << ','
        << m.layout().width() << ',' << names << ',' << (hidden.empty() ? std::string("0") : join(hidden)) << ','
        << to_string(net.activation()) << ',' << m.basis().size() << ',' << m.basis().degree() << ','
        << m.nets().size() << ',' << parameter_count(m) << '\n';
  }
  if (!o.vi) return kOk;

  const auto loaded = load_data(o.data, ctx);
  const auto& sites = loaded.data.sites;
  const auto graph = layout_graph(sites, b.max_neighbors);
  check_layout(b, graph, sites);
  const DesignDistribution design{meta_double(b, "delta_lo", 0.0), meta_double(b, "delta_hi", 1.0),
                                  meta_double(b, "rho_lo", 0.0),   meta_double(b, "rho_hi", 0.5),
                                  meta_double(b, "r_lo", 0.0),     meta_double(b, "r_hi", 1.0)};
  const auto taus = parse_doubles(o.taus, "taus");
  std::vector<std::size_t> positions;
  if (b.global) {
    positions.push_back(0);
  } else if (!o.positions.empty()) {
    for (double p : parse_doubles(o.positions, "positions")) {
      require(p >= 1.0 && p < static_cast<double>(b.models.size()), "position out of range");
      positions.push_back(static_cast<std::size_t>(p));
    }
  } else {
    for (std::size_t p = 1; p < b.models.size(); ++p) positions.push_back(p);
  }

  out << "\nposition,site_id,feature,tau,vi\n" << std::setprecision(8);
  for (auto pos : positions) {
    const auto& m = b.models[pos];
    const auto ref = b.global ? generate_global_training_data(sites, graph, b.spatial, design, m.layout(), o.reference, o.seed)
                              : generate_local_training_data(sites, graph, pos, b.spatial, design, m.layout(), o.reference, o.seed);
    const auto names = m.layout().names();
    for (std::size_t j = 0; j < names.size(); ++j) {
      const auto ale = ale_and_vi(m, ref.x, j, taus, o.bins);
      for (std::size_t k = 0; k < taus.size(); ++k) {
        out << (b.global ? std::string("all") : std::to_string(pos)) << ','
            << (b.global ? std::string("all") : b.site_order[pos]) << ',' << names[j] << ',' << taus[k] << ','
            << ale.importance[k] << '\n';
      }
    }
  }
  return kOk;
}

// ---------------------------------------------------------------- fetch

struct FetchOpts {
  std::string dir = ".";
  std::string sites;
  std::string sites_file;
  std::string start = "1972-01-01";
  std::string end = "2021-12-31";
  std::string out;
  std::string cache;
  bool offline = false;
  bool allow_partial = false;
  std::size_t min_days = 300;
};

int cmd_fetch(const FetchOpts& o, const Context& ctx) {
  auto ids = split_list(o.sites);
  if (!o.sites_file.empty()) {
    std::ifstream in(o.sites_file);
    if (!in) throw InvalidArgument("cannot open " + o.sites_file);
    std::string line;
    while (std::getline(in, line)) {
      line.erase(0, line.find_first_not_of(" \t"));
      line.erase(line.find_last_not_of(" \t\r") + 1);
      if (!line.empty() && line[0] != '#') ids.push_back(line);
    }
  }
  require(!ids.empty(), "give site ids with --sites or --sites-file");
  FetchOptions opt;
  opt.cache_dir = o.cache;
  opt.offline = o.offline;
  opt.min_days = o.min_days;
  const auto result = fetch_nwis(ids, o.start, o.end, opt);

  const fs::path out = o.out.empty() ? fs::path(o.dir) / "data.csv" : fs::path(o.out);
  fs::create_directories(out.parent_path().empty() ? fs::path(".") : out.parent_path());
  for (const auto& e : result.errors) ctx.err << "site " << e.site_id << ": " << e.message << "\n";
  if (result.records.empty()) throw NumericError("no site could be fetched");
  {
    std::ofstream f(out);
    write_station_csv(f, result.records);
  }
  const auto errors_path = out.parent_path() / (out.stem().string() + ".errors.csv");
  {
    std::ofstream f(errors_path);
    f << "site_id,message\n";
    for (const auto& e : result.errors) f << e.site_id << ",\"" << e.message << "\"\n";
  }
  write_manifest(sidecar(out), {{"coordinates", "lonlat"}, {"power", 0.0}, {"source", "nwis"}, {"partial", result.partial()}});
  write_snapshot(ctx, out.parent_path().empty() ? fs::path(".") : out.parent_path(), "fetch");
  auto m = manifest_base(ctx);
  m["outputs"] = {{out.filename().string(), file_sha256(out)}};
  m["partial"] = result.partial();
  write_manifest(out.parent_path() / (out.stem().string() + ".manifest.json"), m);

  std::size_t missing = 0;
  for (const auto& r : result.records) missing += std::isfinite(r.annual_max_cms) ? 0 : 1;
  ctx.out << "fetched " << ids.size() - result.errors.size() << "/" << ids.size() << " sites, " << result.records.size()
          << " site-years (" << missing << " missing) -> " << out.string() << "\n";
  if (result.partial() && !o.allow_partial) {
    ctx.err << result.errors.size() << " site(s) failed; partial results written, pass --allow-partial to accept\n";
    return kInternalError;
  }
  return kOk;
}

// ---------------------------------------------------------------- dispatch

const std::vector<std::string> kCommands = {"simulate", "train", "fit", "diagnose", "exceedance", "compare", "fetch", "spqr"};

// Config-file entries become --key=value arguments of the active command,
// placed before the command-line arguments so that those take precedence.
std::vector<std::string> expand_config(const IniFile& ini, CLI::App& app, const std::vector<std::string>& path) {
  std::vector<std::string> active;
  for (const auto& [section, entries] : ini.sections) {
    std::vector<std::string> target = path;
    if (!section.empty()) {
      auto names = section;
      std::replace(names.begin(), names.end(), '.', ',');
      target = split_list(names);
    }
    CLI::App* sub = &app;
    for (const auto& name : target) {
      sub = sub->get_subcommand_no_throw(name);
      if (!sub) throw InvalidArgument("unknown config section [" + section + "]");
    }
    const bool is_active = target == path;
    for (const auto& [key, value] : entries) {
      if (key == "help" || key == "config" || !sub->get_option_no_throw("--" + key)) {
        throw InvalidArgument("unknown key '" + key + "' in config section [" + (section.empty() ? std::string("top") : section) + "]");
      }
      if (is_active) active.push_back("--" + key + "=" + value);
    }
  }
  return active;
}

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Process mixture model for spatial extremes", "pmm"};
  app.require_subcommand(1);
  app.set_version_flag("--version", PMM_VERSION);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  std::string config_path;
  app.add_option("--config", config_path, "INI file; [command] sections hold option defaults");

  SimulateOpts sim;
  auto* s = app.add_subcommand("simulate", "simulate a dataset from one model variant");
  s->add_option("--dir", sim.dir, "output pipeline directory")->capture_default_str();
  s->add_option("--model", sim.model, "pmm, hw, msp, gp or independent")->capture_default_str();
  s->add_option("--n-sites", sim.n_sites)->capture_default_str();
  s->add_option("--reps", sim.reps, "independent replicates (years)")->capture_default_str();
  s->add_option("--delta", sim.delta)->capture_default_str();
  s->add_option("--rho", sim.rho, "GP range; the max-stable range is tied to it")->capture_default_str();
  s->add_option("--alpha", sim.alpha)->capture_default_str();
  s->add_option("--r", sim.r, "spatial variance fraction")->capture_default_str();
  s->add_option("--first-year", sim.first_year)->capture_default_str();
  s->add_option("--mu", sim.mu, "GEV location on the transformed scale")->capture_default_str();
  s->add_option("--sigma", sim.sigma)->capture_default_str();
  s->add_option("--xi", sim.xi)->capture_default_str();
  s->add_option("--power", sim.power, "flows are the inverse power transform of the GEV values")->capture_default_str();
  s->add_option("--seed", sim.seed)->capture_default_str();
  s->add_option("--threads", sim.threads)->capture_default_str();

  TrainOpts tr;
  auto* t = app.add_subcommand("train", "train SPQR conditional density nets");
  add_data_options(t, tr.data);
  t->add_option("--model", tr.model)->capture_default_str();
  t->add_option("--out", tr.out, "bundle path (default <dir>/nets/<model>.json)");
  t->add_option("--neighbors", tr.neighbors)->capture_default_str();
  t->add_option("--hidden", tr.hidden, "comma-separated hidden sizes, 0 for a linear net")->capture_default_str();
  t->add_option("--knots", tr.knots, "M-spline basis functions")->capture_default_str();
  t->add_option("--degree", tr.degree)->capture_default_str();
  t->add_option("--epochs", tr.epochs)->capture_default_str();
  t->add_option("--samples", tr.samples)->capture_default_str();
  t->add_option("--batch", tr.batch)->capture_default_str();
  t->add_option("--lr", tr.lr)->capture_default_str();
  t->add_option("--validation", tr.validation)->capture_default_str();
  t->add_option("--activation", tr.activation, "relu or sigmoid")->capture_default_str();
  t->add_option("--ensemble", tr.ensemble)->capture_default_str();
  t->add_option("--scale", tr.scale, "neighbour features: uniform or normal")->capture_default_str();
  t->add_option("--alpha", tr.alpha)->capture_default_str();
  t->add_flag("--free-r", tr.free_r, "learn the variance fraction r");
  t->add_option("--r", tr.r, "fixed r when not free")->capture_default_str();
  t->add_option("--delta-lo", tr.delta_lo)->capture_default_str();
  t->add_option("--delta-hi", tr.delta_hi)->capture_default_str();
  t->add_option("--rho-lo", tr.rho_lo)->capture_default_str();
  t->add_option("--rho-hi", tr.rho_hi)->capture_default_str();
  t->add_option("--r-lo", tr.r_lo)->capture_default_str();
  t->add_option("--r-hi", tr.r_hi)->capture_default_str();
  t->add_flag("--global", tr.global, "one padded net for all positions");
  t->add_option("--seed", tr.seed)->capture_default_str();
  t->add_option("--threads", tr.threads)->capture_default_str();

  FitOpts fi;
  auto* f = app.add_subcommand("fit", "run adaptive Metropolis chains");
  add_data_options(f, fi.data);
  f->add_option("--model", fi.model)->capture_default_str();
  f->add_option("--nets", fi.nets, "bundle path (default <dir>/nets/<model>.json)");
  f->add_flag("--exact", fi.exact, "gp only: exact Gaussian conditionals instead of nets");
  f->add_option("--neighbors", fi.neighbors, "conditioning set size with --exact")->capture_default_str();
  f->add_option("--margins", fi.margins, "stvc, shared or fixed")->capture_default_str();
  f->add_option("--mu", fi.mu, "known GEV location (fixed margins)")->capture_default_str();
  f->add_option("--sigma", fi.sigma)->capture_default_str();
  f->add_option("--xi", fi.xi)->capture_default_str();
  f->add_option("--iterations", fi.iterations)->capture_default_str();
  f->add_option("--burn-in", fi.burn_in)->capture_default_str();
  f->add_option("--thin", fi.thin)->capture_default_str();
  f->add_option("--chains", fi.chains)->capture_default_str();
  f->add_option("--rho-max", fi.rho_max, "upper bound of the uniform range prior")->capture_default_str();
  f->add_flag("--pointwise", fi.pointwise, "store pointwise log-likelihoods for WAIC/LOO");
  f->add_flag("--prior-only", fi.prior_only, "sample the prior");
  f->add_option("--seed", fi.seed)->capture_default_str();
  f->add_option("--threads", fi.threads, "chains run in parallel")->capture_default_str();

  DiagnoseOpts di;
  auto* d = app.add_subcommand("diagnose", "posterior summary, chi, variogram, PIT and scores");
  add_data_options(d, di.data);
  d->add_option("--model", di.model)->capture_default_str();
  d->add_option("--levels", di.levels, "chi threshold levels")->capture_default_str();
  d->add_option("--bins", di.bins)->capture_default_str();
  d->add_option("--model-reps", di.model_reps, "replicates simulated for the model chi")->capture_default_str();
  d->add_option("--seed", di.seed)->capture_default_str();
  d->add_option("--threads", di.threads)->capture_default_str();

  ExceedanceOpts ex;
  auto* e = app.add_subcommand("exceedance", "posterior joint exceedance for a site cluster in two years");
  add_data_options(e, ex.data);
  e->add_option("--model", ex.model)->capture_default_str();
  e->add_option("--cluster", ex.cluster, "comma-separated site ids")->required();
  e->add_option("--year-a", ex.year_a, "default first year");
  e->add_option("--year-b", ex.year_b, "default last year");
  e->add_option("--level", ex.level, "per-site empirical quantile used as threshold")->capture_default_str();
  e->add_option("--draws", ex.draws)->capture_default_str();
  e->add_option("--sims", ex.sims, "simulations per draw")->capture_default_str();
  e->add_option("--seed", ex.seed)->capture_default_str();
  e->add_option("--threads", ex.threads)->capture_default_str();

  CompareOpts co;
  auto* c = app.add_subcommand("compare", "WAIC and LOO across fitted models");
  c->add_option("--dir", co.dir)->capture_default_str();
  c->add_option("--models", co.models)->capture_default_str();
  c->add_option("--truncation", co.truncation, "importance-weight truncation quantile")->capture_default_str();

  FetchOpts fe;
  auto* n = app.add_subcommand("fetch", "annual maxima from the NWIS daily-values service");
  n->add_option("--dir", fe.dir)->capture_default_str();
  n->add_option("--sites", fe.sites, "comma-separated USGS site numbers");
  n->add_option("--sites-file", fe.sites_file, "one site number per line");
  n->add_option("--start", fe.start)->capture_default_str();
  n->add_option("--end", fe.end)->capture_default_str();
  n->add_option("--out", fe.out, "station CSV (default <dir>/data.csv)");
  n->add_option("--cache", fe.cache, std::string("response cache (default $") + kNwisCacheEnv + " or ./nwis_cache)");
  n->add_flag("--offline", fe.offline, "use cached responses only");
  n->add_flag("--allow-partial", fe.allow_partial, "exit 0 when some sites fail");
  n->add_option("--min-days", fe.min_days, "daily values needed for a complete year")->capture_default_str();

  InspectOpts in;
  auto* sp = app.add_subcommand("spqr", "SPQR net utilities");
  sp->require_subcommand(1);
  auto* i = sp->add_subcommand("inspect", "architecture and variable importance as CSV");
  add_data_options(i, in.data);
  i->add_option("--bundle", in.bundle, "bundle path (default <dir>/nets/<model>.json)");
  i->add_option("--model", in.model)->capture_default_str();
  i->add_option("--out", in.out, "CSV path (default stdout)");
  i->add_flag("--vi", in.vi, "accumulated-local-effect importance per feature");
  i->add_option("--taus", in.taus)->capture_default_str();
  i->add_option("--reference", in.reference, "reference sample size")->capture_default_str();
  i->add_option("--bins", in.bins)->capture_default_str();
  i->add_option("--positions", in.positions, "positions to inspect (default all)");
  i->add_option("--seed", in.seed)->capture_default_str();

  try {
    // Locate --config and the command path before the real parse.
    std::vector<std::string> args;
    std::vector<std::string> path;
    for (std::size_t k = 0; k < raw_args.size(); ++k) {
      const auto& a = raw_args[k];
      if (a == "--config" && k + 1 < raw_args.size()) {
        config_path = raw_args[++k];
        continue;
      }
      if (a.rfind("--config=", 0) == 0) {
        config_path = a.substr(9);
        continue;
      }
      if (path.empty() && std::find(kCommands.begin(), kCommands.end(), a) != kCommands.end()) path.push_back(a);
      else if (path.size() == 1 && path[0] == "spqr" && a == "inspect") path.push_back(a);
      args.push_back(a);
    }
    if (!config_path.empty() && !path.empty()) {
      const auto extra = expand_config(read_ini(config_path), app, path);
      const auto at = std::find(args.begin(), args.end(), path.back()) + 1;
      args.insert(at, extra.begin(), extra.end());
    } else if (!config_path.empty()) {
      read_ini(config_path);
    }
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
      app.parse(reversed);
    } catch (const CLI::ParseError& pe) {
      const int code = app.exit(pe, out, err);
      return code == 0 ? kOk : kUserError;
    }

    CLI::App* active = app.get_subcommands().front();
    std::string name = active->get_name();
    if (active == sp) {
      active = i;
      name = "spqr.inspect";
    }
    // unset optional values are left out so the snapshot parses back
    std::string snapshot;
    {
      std::istringstream lines(active->config_to_str(true, false));
      std::string line;
      while (std::getline(lines, line)) {
        if (line.size() < 3 || line.compare(line.size() - 3, 3, "=\"\"") != 0) snapshot += line + "\n";
      }
    }
    Context ctx{out, err, name, snapshot, ""};
    ctx.config_hash = sha256_hex(ctx.snapshot);
    if (*s) return cmd_simulate(sim, ctx);
    if (*t) return cmd_train(tr, ctx);
    if (*f) return cmd_fit(fi, ctx);
    if (*d) return cmd_diagnose(di, ctx);
    if (*e) return cmd_exceedance(ex, ctx);
    if (*c) return cmd_compare(co, ctx);
    if (*n) return cmd_fetch(fe, ctx);
    if (*i) return cmd_inspect(in, ctx);
    return kUserError;
  } catch (const InvalidArgument& ex) {
    err << "error: " << ex.what() << "\n";
    return kUserError;
  } catch (const json::exception& ex) {
    err << "error: malformed artifact: " << ex.what() << "\n";
    return kUserError;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kInternalError;
  }
}

}  // namespace pmm::cli
