// nanogrid: command-line front end (simulate, powerflow, size, validate).

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "nanogrid/io/config_files.hpp"
#include "nanogrid/io/results.hpp"
#include "nanogrid/nanogrid.hpp"
#include "nanogrid/validation/acceptance.hpp"

namespace fs = std::filesystem;
using namespace nanogrid;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitSolver = 2;

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("nanogrid");
  logger->set_pattern("%^%l%$: %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("NANOGRID_LOG")) {
    const auto lvl = spdlog::level::from_str(env);
    if (lvl == spdlog::level::off && std::string(env) != "off")
      spdlog::warn("NANOGRID_LOG: unknown level '{}', keeping 'warn'", env);
    else
      spdlog::set_level(lvl);
  }
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p);
  if (!f) throw InvalidInput("cannot write " + p.string());
  return f;
}

struct SimulateArgs {
  std::string scenario, out;
  std::optional<double> dt;
  std::optional<std::string> from, to;
};

int cmd_simulate(const SimulateArgs& a) {
  io::ScenarioOverrides ov;
  ov.dt = a.dt;
  try {
    if (a.from) ov.from = parse_iso8601(*a.from);
    if (a.to) ov.to = parse_iso8601(*a.to);
  } catch (const InvalidInput& e) {
    throw InvalidInput(std::string("--from/--to: ") + e.what());
  }
  const sim::Scenario sc = io::load_scenario(a.scenario, ov);
  spdlog::info("scenario {}: {} GSS, {} load banks, {} .. {}, dt {} s", a.scenario, sc.gss.size(), sc.loads.size(),
               format_iso8601(sc.start), format_iso8601(sc.end), sc.dt);

  const fs::path out(a.out);
  fs::create_directories(out);
  std::vector<std::string> gss, loads, branches;
  for (const auto& g : sc.gss) gss.push_back(g.spec.id);
  for (const auto& l : sc.loads) loads.push_back(l.id);
  for (const auto& b : sc.network.branches()) branches.push_back(b.a + "-" + b.b);

  auto traces = open_out(out / "traces.csv");
  io::TraceCsvWriter writer(traces, gss, loads, branches);
  writer.header();
  io::PlotDataWriter plot(out / "plotdata", gss, loads);

  sim::SimOptions opt;
  opt.record_traces = false;
  opt.on_step = [&](const sim::StepRecord& r) {
    writer.row(r);
    plot.row(r);
  };
  const auto t0 = std::chrono::steady_clock::now();
  const sim::SimResult res = sim::run(sc, opt);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  spdlog::info("{} steps in {:.2f} s", res.steps_run, secs);
  if (res.nonconverged_steps) spdlog::warn("{} steps hit the inner iteration cap", res.nonconverged_steps);

  auto summary = open_out(out / "summary.txt");
  io::write_summary(summary, res, sc);
  io::PlotDataWriter::write_ledger_csv(out / "plotdata", res);
  std::cout << "wrote " << (out / "traces.csv").string() << ", " << (out / "summary.txt").string() << " and "
            << (out / "plotdata").string() << "/\n";
  return kExitOk;
}

int cmd_powerflow(const std::string& network_path, const std::string& flow_path, const std::string& out_path) {
  const network::Network net = io::load_network(network_path);
  const flow::FlowProblem prob = io::load_flow_spec(flow_path);
  flow::FlowSolution sol;
  try {
    sol = flow::newton_raphson_flow(prob, net);
  } catch (const ConvergenceError& e) {
    std::cerr << "error: " << e.what() << " (iterations " << e.iterations() << ", max mismatch " << e.residual()
              << " W)\n";
    return kExitSolver;
  }
  std::cout << "converged in " << sol.iterations << " iterations, max mismatch " << io::num(sol.max_mismatch, 3)
            << " W\n\nbus    voltage_V   injection_W\n";
  char line[128];
  for (const auto& b : net.buses()) {
    std::snprintf(line, sizeof line, "%-6s %9.4f %13.3f\n", b.id.c_str(), sol.voltages.at(b.id),
                  sol.bus_injections.at(b.id));
    std::cout << line;
  }
  std::cout << "\nbranch       length_m  current_A\n";
  for (std::size_t k = 0; k < net.branches().size(); ++k) {
    const auto& br = net.branches()[k];
    std::snprintf(line, sizeof line, "%-12s %8.2f %10.4f\n", (br.a + "-" + br.b).c_str(), br.length_m,
                  sol.branch_currents[k]);
    std::cout << line;
  }
  auto f = open_out(out_path);
  f << io::flow_solution_json(net, sol).dump(2) << '\n';
  std::cout << "\nwrote " << out_path << '\n';
  return kExitOk;
}

int cmd_size(const config::SizingInput& in) {
  const config::SizingResult r = config::size_system(in);
  std::cout << "corrected daily load  L_DCcorr = " << io::num(r.corrected_load, 4) << " kWh\n";
  std::cout << "days of autonomy      N_D      = " << io::num(r.autonomy_days, 4)
            << (r.autonomy_clamped ? " (raised to the minimum)" : "") << '\n';
  std::cout << "battery bank          C        = " << io::num(r.bank_capacity_wh, 5) << " Wh\n";
  std::cout << "battery bank          C        = " << io::num(r.bank_capacity_ah, 5) << " Ah at "
            << io::num(in.bank_voltage, 4) << " V\n";
  std::cout << "PV generator          P_PV     = " << io::num(r.pv_rated_wp, 5) << " Wp\n";
  return kExitOk;
}

int cmd_validate(const std::string& data_dir, const std::string& out_path, bool quick) {
  validation::AcceptanceOptions opt;
  opt.data_dir = data_dir;
  opt.dt_halving = !quick;
  const auto results = validation::run_acceptance(opt);
  bool all = true;
  for (const auto& c : results) {
    std::cout << validation::format_line(c) << '\n';
    all = all && c.pass;
  }
  auto f = open_out(out_path);
  f << validation::to_json(results).dump(2) << '\n';
  std::cout << "wrote " << out_path << '\n';
  return all ? kExitOk : kExitSolver;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Desk-scale simulator for small DC nanogrids"};
  app.require_subcommand(1);

  SimulateArgs sim_args;
  auto* simulate = app.add_subcommand("simulate", "Run a scenario; write traces.csv, summary.txt and plotdata/");
  simulate->add_option("--scenario", sim_args.scenario, "Scenario file")->required()->check(CLI::ExistingFile);
  simulate->add_option("--out", sim_args.out, "Output directory")->required();
  simulate->add_option("--dt", sim_args.dt, "Time step override, seconds")->check(CLI::PositiveNumber);
  simulate->add_option("--from", sim_args.from, "Window start override (ISO-8601 UTC)");
  simulate->add_option("--to", sim_args.to, "Window end override (ISO-8601 UTC)");

  std::string network_path, flow_path, flow_out = "powerflow.json";
  auto* pf = app.add_subcommand("powerflow", "Solve one steady-state load flow");
  pf->add_option("--network", network_path, "Network file")->required()->check(CLI::ExistingFile);
  pf->add_option("--flow", flow_path, "Flow spec: source voltages and loads")->required()->check(CLI::ExistingFile);
  pf->add_option("--out", flow_out, "Solution file (JSON)")->capture_default_str();

  config::SizingInput sizing;
  auto* size = app.add_subcommand("size", "Off-grid sizing: autonomy, battery bank and PV power");
  size->add_option("--load", sizing.daily_dc_load, "Daily DC consumption, kWh")->required();
  size->add_option("--hsp", sizing.hsp_min, "Lowest monthly mean sun hours, kWh/m2/day")->required();
  size->add_option("--efficiency", sizing.charge_discharge_eff, "Battery charge/discharge efficiency")->capture_default_str();
  size->add_option("--dod", sizing.max_depth_of_discharge, "Maximum depth of discharge")->capture_default_str();
  size->add_option("--safety", sizing.safety_factor, "PV safety factor")->capture_default_str();
  size->add_option("--voltage", sizing.bank_voltage, "Bank voltage, V")->capture_default_str();
  size->add_option("--min-autonomy", sizing.min_autonomy_days, "Lower bound on days of autonomy")->capture_default_str();

#ifdef NANOGRID_DATA_DIR
  std::string data_dir = NANOGRID_DATA_DIR;
#else
  std::string data_dir = "data";
#endif
  std::string report = "validation.json";
  bool quick = false;
  auto* validate = app.add_subcommand("validate", "Run the acceptance checks and write a JSON report");
  validate->add_option("--data", data_dir, "Directory with the bundled scenario")->capture_default_str();
  validate->add_option("--out", report, "Report file")->capture_default_str();
  validate->add_flag("--quick", quick, "Skip the dt-halving rerun");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*simulate) return cmd_simulate(sim_args);
    if (*pf) return cmd_powerflow(network_path, flow_path, flow_out);
    if (*size) return cmd_size(sizing);
    if (*validate) return cmd_validate(data_dir, report, quick);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitSolver;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitSolver;
  }
  return kExitUsage;
}
