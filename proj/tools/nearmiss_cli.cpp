// nearmiss: offline near-miss auditing for agent tool-call trajectories.

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "nearmiss/nearmiss.hpp"

#ifdef NEARMISS_WITH_LLM
#include "nearmiss/llm_backend.hpp"
#endif

namespace fs = std::filesystem;
using namespace nearmiss;

namespace {

constexpr int kOk = 0;
constexpr int kRuntime = 1;
constexpr int kValidation = 2;
constexpr int kGate = 3;

// Carries the exit code chosen by a subcommand.
struct ExitWith : std::runtime_error {
  int code;
  ExitWith(int c, const std::string& msg) : std::runtime_error(msg), code(c) {}
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ExitWith(kRuntime, "cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ExitWith(kRuntime, "cannot write " + p.string());
  out << text;
}

std::vector<fs::path> json_files(const fs::path& p) {
  std::vector<fs::path> out;
  if (fs::is_directory(p)) {
    for (const auto& e : fs::directory_iterator(p))
      if (e.is_regular_file() && e.path().extension() == ".json") out.push_back(e.path());
    std::sort(out.begin(), out.end());
  } else if (fs::is_regular_file(p)) {
    out.push_back(p);
  } else {
    throw ExitWith(kRuntime, "no such file or directory: " + p.string());
  }
  return out;
}

ToolCatalog load_catalog(const std::string& path) {
  try {
    return parse_catalog(read_file(path));
  } catch (const Error& e) {
    throw ExitWith(kValidation, e.what());
  }
}

// Prints diagnostics to stderr and returns them; parse failures become diagnostics too.
std::pair<GuardSpecSet, std::vector<Diagnostic>> load_spec(const std::string& path, const ToolCatalog& catalog) {
  Json doc;
  try {
    doc = parse_json_text(read_file(path), ErrorCode::InvalidSpec);
  } catch (const Error& e) {
    return {{}, {{DiagCode::SpecSyntax, path, e.what()}}};
  }
  auto [set, diags] = read_guard_spec(doc);
  if (diags.empty()) diags = validate_spec(set, catalog);
  return {std::move(set), std::move(diags)};
}

ReportFormat format_flag(const std::string& s) {
  auto f = parse_report_format(s);
  if (!f) throw ExitWith(kRuntime, "unknown format '" + s + "' (json, csv, markdown)");
  return *f;
}

std::string extension(ReportFormat f) {
  switch (f) {
    case ReportFormat::json: return "json";
    case ReportFormat::csv: return "csv";
    case ReportFormat::markdown: return "md";
  }
  return "txt";
}

GoldAnnotation load_gold(const std::string& path) {
  return parse_gold_json(parse_json_text(read_file(path), ErrorCode::InvalidConfig));
}

MatchLevel level_flag(const std::string& s) {
  if (s == "trajectory") return MatchLevel::trajectory;
  if (s == "mtc") return MatchLevel::mtc;
  throw ExitWith(kRuntime, "unknown level '" + s + "' (trajectory, mtc)");
}

struct AnalyzeArgs {
  std::string catalog, spec, traces, backend = "code", llm_config, out, format = "json", gold;
  bool assume_success = false, all_outcomes = false, strict_freshness = false, fail_on_missing_guard = false;
  unsigned jobs = 1;
};

int run_analyze(const AnalyzeArgs& a) {
  ToolCatalog catalog = load_catalog(a.catalog);
  auto [specset, diags] = load_spec(a.spec, catalog);
  if (!diags.empty()) {
    for (const auto& d : diags) std::cerr << format_diagnostic(d) << "\n";
    throw ExitWith(kValidation, std::to_string(diags.size()) + " diagnostics");
  }
  ReportFormat fmt = format_flag(a.format);

  std::unique_ptr<ResolutionBackend> backend;
  if (a.backend == "code") {
    backend = std::make_unique<CodeBackend>(catalog, ResolverOptions{a.strict_freshness});
  } else if (a.backend == "llm") {
    if (a.llm_config.empty()) throw ExitWith(kRuntime, "--backend llm requires --llm-config");
#ifdef NEARMISS_WITH_LLM
    backend = std::make_unique<LlmBackend>(catalog, load_llm_config(a.llm_config));
#else
    throw ExitWith(kRuntime, "this build has no LLM backend");
#endif
  } else {
    throw ExitWith(kRuntime, "unknown backend '" + a.backend + "' (code, llm)");
  }

  std::vector<Trajectory> trajs;
  for (const auto& p : json_files(a.traces)) {
    try {
      trajs.push_back(parse_trajectory(read_file(p), catalog));
    } catch (const Error& e) {
      throw ExitWith(kRuntime, p.string() + ": " + e.what());
    }
  }

  std::vector<TrajectoryReport> reports(trajs.size());
  std::vector<std::string> errors(trajs.size());
  std::atomic<std::size_t> next{0};
  DetectorOptions dopt{a.fail_on_missing_guard};
  auto worker = [&] {
    for (std::size_t i = next++; i < trajs.size(); i = next++) {
      try {
        reports[i] = analyze_trajectory(trajs[i], specset, catalog, *backend, dopt);
      } catch (const std::exception& e) {
        errors[i] = trajs[i].id + ": " + e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned j = 1; j < std::max(1u, a.jobs); ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (!e.empty()) throw ExitWith(kRuntime, e);

  std::sort(reports.begin(), reports.end(),
            [](const auto& x, const auto& y) { return x.trajectory_id < y.trajectory_id; });
  CorpusMetrics metrics = aggregate(reports, {a.assume_success, a.all_outcomes});
  std::optional<PRF> prf;
  if (!a.gold.empty()) prf = compare_to_gold(reports, load_gold(a.gold));

  fs::path out(a.out);
  fs::create_directories(out / "reports");
  for (const auto& r : reports) write_file(out / "reports" / (r.trajectory_id + ".json"), report_to_json(r).dump(2) + "\n");
  write_file(out / "metrics.json", canonical_dump(metrics_to_json(metrics, prf)) + "\n");
  if (fmt != ReportFormat::json) write_file(out / ("metrics." + extension(fmt)), emit_report(metrics, prf, fmt));

  std::cout << emit_report(metrics, prf, ReportFormat::markdown);
  for (const auto& r : reports)
    for (const auto& w : r.warnings) std::cerr << "warning: " << r.trajectory_id << ": " << w << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Offline near-miss auditor for agent tool-call trajectories"};
  app.require_subcommand(1);
  int exit_code = kOk;

  std::string catalog_path, spec_path;
  auto* validate = app.add_subcommand("validate", "Check a catalog and guard spec");
  validate->add_option("--catalog", catalog_path, "tool catalog JSON")->required();
  validate->add_option("--spec", spec_path, "guard spec JSON")->required();
  validate->callback([&] {
    ToolCatalog catalog = load_catalog(catalog_path);
    auto diags = load_spec(spec_path, catalog).second;
    for (const auto& d : diags) std::cerr << format_diagnostic(d) << "\n";
    std::cout << diags.size() << " diagnostics\n";
    exit_code = diags.empty() ? kOk : kValidation;
  });

  AnalyzeArgs aa;
  auto* analyze = app.add_subcommand("analyze", "Detect near-misses and write reports and metrics");
  analyze->add_option("--catalog", aa.catalog, "tool catalog JSON")->required();
  analyze->add_option("--spec", aa.spec, "guard spec JSON")->required();
  analyze->add_option("--traces", aa.traces, "trace file or directory")->required();
  analyze->add_option("--out", aa.out, "output directory")->required();
  analyze->add_option("--backend", aa.backend, "code or llm");
  analyze->add_option("--llm-config", aa.llm_config, "LLM client config JSON");
  analyze->add_option("--format", aa.format, "json, csv or markdown");
  analyze->add_option("--gold", aa.gold, "gold annotations JSON");
  analyze->add_option("--jobs", aa.jobs, "worker threads");
  analyze->add_flag("--assume-success", aa.assume_success, "treat unknown outcomes as successful");
  analyze->add_flag("--all-outcomes", aa.all_outcomes, "count near-misses regardless of outcome");
  analyze->add_flag("--strict-freshness", aa.strict_freshness, "ignore reads older than a related mutation");
  analyze->add_flag("--fail-on-missing-guard", aa.fail_on_missing_guard, "error on unguarded mutating calls");
  analyze->callback([&] { exit_code = run_analyze(aa); });

  std::string reports_dir, gold_path, level = "trajectory";
  std::optional<double> min_p, min_r;
  auto* score = app.add_subcommand("score", "Compare saved reports with gold annotations");
  score->add_option("--reports", reports_dir, "directory of report JSON files")->required();
  score->add_option("--gold", gold_path, "gold annotations JSON")->required();
  score->add_option("--level", level, "trajectory or mtc");
  score->add_option("--min-precision", min_p, "fail below this precision");
  score->add_option("--min-recall", min_r, "fail below this recall");
  score->callback([&] {
    std::vector<TrajectoryReport> reports;
    for (const auto& p : json_files(reports_dir)) reports.push_back(report_from_json(parse_json_text(read_file(p))));
    PRF prf = compare_to_gold(reports, load_gold(gold_path), level_flag(level));
    std::cout << "P " << format_fixed(prf.precision) << " R " << format_fixed(prf.recall) << " (tp " << prf.tp
              << ", fp " << prf.fp << ", fn " << prf.fn << ")\n";
    bool fail = (min_p && prf.precision < *min_p) || (min_r && prf.recall < *min_r);
    exit_code = fail ? kGate : kOk;
  });

  SynthOptions so;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic airline corpus");
  synth->add_option("--n", so.n, "number of trajectories");
  synth->add_option("--nm-rate", so.nm_rate, "fraction of trajectories with a planted bypass");
  synth->add_option("--seed", so.seed, "generator seed");
  synth->add_option("--bypass-reads", so.bypass_reads, "read tool bypassed in each planted trajectory")
      ->delimiter(',');
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->callback([&] {
    SynthCorpus corpus = generate_corpus(so);
    write_corpus(synth_out, corpus);
    std::cout << corpus.trajectories.size() << " trajectories, " << corpus.plan.n_nm_trajectories()
              << " with planted near-misses\n";
  });

  std::string metrics_path, report_format = "markdown";
  auto* report = app.add_subcommand("report", "Re-render saved metrics");
  report->add_option("--metrics", metrics_path, "metrics JSON")->required();
  report->add_option("--format", report_format, "json, csv or markdown");
  report->callback([&] {
    auto [m, prf] = metrics_from_json(parse_json_text(read_file(metrics_path), ErrorCode::MalformedReport));
    std::cout << emit_report(m, prf, format_flag(report_format));
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kRuntime;
  } catch (const ExitWith& e) {
    std::cerr << e.what() << "\n";
    return e.code;
  } catch (const SpecError& e) {
    for (const auto& d : e.diagnostics()) std::cerr << format_diagnostic(d) << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return exit_code;
}
