#include "kinoplan/batch.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <thread>

#include "kinoplan/artifacts.hpp"

namespace kinoplan {

int batch_thread_count() {
  if (const char* env = std::getenv("KINOPLAN_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

BatchReport run_batch(const Scenario& scenario, int trials,
                      const std::vector<int>& checkpoints, int threads) {
  if (trials < 1) throw std::invalid_argument("run_batch: trials must be >= 1");
  std::vector<int> cps = checkpoints;
  std::sort(cps.begin(), cps.end());

  BatchReport report;
  report.checkpoints = cps;
  report.trials.resize(trials);

  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;

  auto worker = [&]() {
    while (true) {
      const int idx = next.fetch_add(1);
      if (idx >= trials) return;
      try {
        Scenario sc = scenario;  // per-trial config copy
        sc.planner.seed = scenario.planner.seed + static_cast<std::uint64_t>(idx);
        sc.world.sampler.seed = sc.planner.seed;
        sc.planner.max_nodes = cps.empty() ? sc.planner.max_nodes : cps.back();

        TrialRecord rec;
        rec.seed = sc.planner.seed;
        rec.checkpoint_cost.assign(cps.size(),
                                   std::numeric_limits<double>::infinity());
        std::size_t cursor = 0;
        auto on_progress = [&](std::size_t nodes, double best) {
          while (cursor < cps.size() &&
                 nodes >= static_cast<std::size_t>(cps[cursor])) {
            rec.checkpoint_cost[cursor] = best;
            ++cursor;
          }
        };
        const PlanResult res = plan(*sc.model, sc.world, sc.R, sc.x_init,
                                    sc.planner, on_progress);
        // Checkpoints the run never reached keep the final incumbent.
        for (; cursor < cps.size(); ++cursor)
          rec.checkpoint_cost[cursor] = res.best_cost;
        rec.final_cost = res.best_cost;
        rec.final_nodes = res.tree.size();
        report.trials[idx] = std::move(rec);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        next.store(trials);
        return;
      }
    }
  };

  const int pool = std::max(1, std::min(threads, trials));
  std::vector<std::thread> workers;
  workers.reserve(pool);
  for (int i = 0; i < pool; ++i) workers.emplace_back(worker);
  for (auto& w : workers) w.join();
  if (first_error) std::rethrow_exception(first_error);

  for (std::size_t c = 0; c < cps.size(); ++c) {
    CheckpointSummary s;
    s.nodes = cps[c];
    std::vector<double> feasible;
    for (const TrialRecord& t : report.trials)
      if (std::isfinite(t.checkpoint_cost[c]))
        feasible.push_back(t.checkpoint_cost[c]);
    s.feasible = static_cast<int>(feasible.size());
    if (!feasible.empty()) {
      double sum = 0.0;
      for (double v : feasible) sum += v;
      s.mean = sum / static_cast<double>(feasible.size());
      if (feasible.size() >= 2) {
        double ss = 0.0;
        for (double v : feasible) ss += (v - s.mean) * (v - s.mean);
        s.variance = ss / static_cast<double>(feasible.size() - 1);
      }
    }
    report.summary.push_back(s);
  }
  return report;
}

void write_batch_csv(const std::string& path, const BatchReport& report,
                     const std::string& scenario_digest, std::uint64_t base_seed,
                     const std::string& solver) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write artifact: " + path);
  out << "# seed = " << base_seed << "\n";
  out << "# solver = " << solver << "\n";
  out << "# scenario_digest = " << scenario_digest << "\n";
  out << "# trials = " << report.trials.size() << "\n";
  out << "# columns = nodes,feasible,mean,variance\n";
  for (const CheckpointSummary& s : report.summary) {
    out << s.nodes << "," << s.feasible << "," << format_g17(s.mean) << ","
        << format_g17(s.variance) << "\n";
  }
  out << "# per_trial = seed";
  for (int c : report.checkpoints) out << ",cost_at_" << c;
  out << "\n";
  for (const TrialRecord& t : report.trials) {
    out << "# trial " << t.seed;
    for (double v : t.checkpoint_cost) out << "," << format_g17(v);
    out << "\n";
  }
}

}  // namespace kinoplan
