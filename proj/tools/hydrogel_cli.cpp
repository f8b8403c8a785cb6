#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "hydrogel/config.hpp"
#include "hydrogel/driver.hpp"
#include "hydrogel/errors.hpp"
#include "hydrogel/mesh.hpp"

using namespace hydrogel;

namespace {

struct CommonArgs {
  std::string config;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config, "flat key = value configuration file");
  cmd->add_option("--set", args.sets, "override, key=value (repeatable)");
  cmd->allow_extras();
  cmd->footer("Any configuration key can also be given as --dotted.key=value.");
}

void apply_override(SimulationConfig& cfg, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + kv + "' is not key=value");
  cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
}

SimulationConfig build_config(const CommonArgs& args, const std::vector<std::string>& extras) {
  SimulationConfig cfg = args.config.empty() ? SimulationConfig{} : load_config(args.config);
  for (const auto& kv : args.sets) apply_override(cfg, kv);
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& a = extras[i];
    if (a.rfind("--", 0) != 0) throw ConfigError("unexpected argument '" + a + "'");
    const std::string body = a.substr(2);
    if (body.find('=') != std::string::npos) {
      apply_override(cfg, body);
    } else {
      if (i + 1 >= extras.size()) throw ConfigError("option '" + a + "' needs a value");
      cfg.set(body, extras[++i]);
    }
  }
  return cfg;
}

void print_summary(const RunRecord& rec) {
  std::cout << "status " << rec.status << "  steps " << rec.series.size() << "  scans " << rec.scans.size() << '\n';
  if (rec.stability.critical) {
    const auto& st = rec.stability.steps[*rec.stability.critical];
    std::cout << rec.stability.message << "  k* = (" << st.k_star.x() << ", " << st.k_star.y() << ")"
              << "  P11/gamma = " << rec.stability.P11_crit_normalized << '\n';
  }
  if (rec.t_ellipticity_loss) std::cout << "ellipticity lost at t = " << *rec.t_ellipticity_loss << '\n';
  if (rec.wrinkle_count) std::cout << "wrinkle count " << *rec.wrinkle_count << '\n';
  if (!rec.failure.empty()) std::cout << "failure: " << rec.failure << '\n';
}

int run_mesh(const SimulationConfig& cfg) {
  cfg.validate();
  const UnitCellMesh mesh = generate_unit_cell(cfg.resolved_geometry());
  std::filesystem::create_directories(cfg.output_dir);
  const std::filesystem::path dir(cfg.output_dir);
  {
    std::ofstream os(dir / "mesh.txt");
    write_mesh(os, mesh);
  }
  {
    std::ofstream os(dir / "mesh.vtk");
    write_vtk_mesh(os, mesh);
  }
  std::cout << "nodes " << mesh.num_nodes() << "  elements " << mesh.num_elements() << "  edges "
            << mesh.num_edges() << "  min jacobian " << min_jacobian(mesh) << '\n';
  return kExitOk;
}

int run_single(const SimulationConfig& cfg) {
  Simulation sim(cfg);
  const RunRecord rec = sim.run();
  write_run_outputs(cfg.output_dir, rec, *sim.model(), sim.stored());
  print_summary(rec);
  return rec.status == "failed" ? kExitSolver : kExitOk;
}

int run_sweep_cmd(const SimulationConfig& cfg) {
  const auto results = run_sweep(cfg, true);
  write_summary_csv(std::cout, results);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Swelling and stability analysis of periodic hydrogel unit cells"};
  app.require_subcommand(1);
  CommonArgs mesh_args, run_args, sweep_args;
  auto* mesh_cmd = app.add_subcommand("mesh", "generate the unit-cell mesh and export it");
  add_common(mesh_cmd, mesh_args);
  auto* run_cmd = app.add_subcommand("run", "single simulation with stability scans");
  add_common(run_cmd, run_args);
  auto* sweep_cmd = app.add_subcommand("sweep", "parametric study over the sweep.* axes");
  add_common(sweep_cmd, sweep_args);
  std::string post_dir;
  auto* post_cmd = app.add_subcommand("post", "re-emit CSV and VTK from a stored run directory");
  post_cmd->add_option("dir", post_dir, "output directory of a previous run")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*mesh_cmd) return run_mesh(build_config(mesh_args, mesh_cmd->remaining()));
    if (*run_cmd) return run_single(build_config(run_args, run_cmd->remaining()));
    if (*sweep_cmd) return run_sweep_cmd(build_config(sweep_args, sweep_cmd->remaining()));
    if (*post_cmd) {
      print_summary(post_process(post_dir));
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DomainError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const MeshError& e) {
    std::cerr << "mesh error: " << e.what() << '\n';
    return kExitMesh;
  } catch (const SolverError& e) {
    std::cerr << "solver error: " << e.what() << '\n';
    return kExitSolver;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}
