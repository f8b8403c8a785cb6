#include <benchmark/benchmark.h>

#include <memory>

#include "hydrogel/assembly.hpp"
#include "hydrogel/fem.hpp"
#include "hydrogel/homogenization.hpp"
#include "hydrogel/mesh.hpp"
#include "hydrogel/solver.hpp"

using namespace hydrogel;

namespace {

struct Fixture {
  std::shared_ptr<const Model> model;
  Eigen::VectorXd d;
  History history;
  double tau = 4e-3;

  explicit Fixture(MeshPreset preset) {
    UnitCellGeometry g;
    g.void_fraction = 0.3;
    g.apply_preset(preset);
    auto mesh = std::make_shared<const UnitCellMesh>(generate_unit_cell(g));
    model = std::make_shared<const Model>(Model::build(mesh, MaterialParams::reference()));
    CellSolver solver(model);
    auto st = reference_state(*model);
    const double mu0 = initial_state(model->materials[0]).mu0;
    advance_step(solver, st, 0.1, [&](double) { return 0.5 * mu0; });
    d = st.d;
    history = st.history;
  }
};

const Fixture& fixture(int preset) {
  static Fixture coarse(MeshPreset::kCoarse), paper(MeshPreset::kPaper);
  return preset == 0 ? coarse : paper;
}

void evaluate(benchmark::State& state, Execution exec) {
  const auto& f = fixture(static_cast<int>(state.range(0)));
  std::vector<ElementResult> out;
  for (auto _ : state) {
    evaluate_elements(*f.model, f.d, f.history, f.tau, true, out, exec);
    benchmark::DoNotOptimize(out.data());
  }
  state.counters["elements"] = f.model->num_elements();
}

void assemble(benchmark::State& state, Execution exec) {
  const auto& f = fixture(static_cast<int>(state.range(0)));
  std::vector<ElementResult> el;
  evaluate_elements(*f.model, f.d, f.history, f.tau, true, el);
  PeriodicStructure ps(*f.model);
  ReducedAssembler<double> asmb(*f.model, periodic_reduction(*f.model, ps));
  Eigen::SparseMatrix<double> K;
  for (auto _ : state) {
    asmb.assemble(el, K, exec);
    benchmark::DoNotOptimize(K.valuePtr());
  }
}

void bloch_assemble(benchmark::State& state, Execution exec) {
  const auto& f = fixture(static_cast<int>(state.range(0)));
  std::vector<ElementResult> el;
  evaluate_elements(*f.model, f.d, f.history, f.tau, true, el);
  PeriodicStructure ps(*f.model);
  ReducedAssembler<cdouble> asmb(*f.model, bloch_reduction(*f.model, ps, Vec2(M_PI, 0.5 * M_PI)));
  Eigen::SparseMatrix<cdouble> K;
  for (auto _ : state) {
    asmb.assemble(el, K, exec);
    benchmark::DoNotOptimize(K.valuePtr());
  }
}

}  // namespace

BENCHMARK_CAPTURE(evaluate, serial, Execution::kSerial)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(evaluate, parallel, Execution::kParallel)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(assemble, serial, Execution::kSerial)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(assemble, parallel, Execution::kParallel)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(bloch_assemble, serial, Execution::kSerial)->Arg(0)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(bloch_assemble, parallel, Execution::kParallel)->Arg(0)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
