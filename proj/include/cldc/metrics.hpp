#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cldc/errors.hpp"

namespace cldc::metrics {

// Continual-learning metrics over a performance matrix P where p[i][j] is
// the mean evaluation return on task j after training through task i.
// Row 0 holds the pre-training evaluation used by forward transfer.

struct PerfMatrix {
    int n_tasks = 0;
    std::vector<double> p;  // (n_tasks + 1) rows * n_tasks cols, NaN = absent

    static PerfMatrix make(int n_tasks);

    /// trained_after in [0, n_tasks]; task is 1-based.
    double& at(int trained_after, int task);
    double at(int trained_after, int task) const;
    bool has(int trained_after, int task) const;
    bool complete() const;  // every entry present
};

/// Average return over tasks 1..i after training through task i:
///   R_i = (1/i) * sum_{j<=i} p[i][j].
double continual_return(const PerfMatrix& P, int i);

struct TaskSeries {
    std::vector<double> values;  // one entry per defined task index
    std::vector<int> index;      // the i each value belongs to
    double mean = 0.0;           // NaN when undefined (fewer than 2 tasks)
};

/// F_i = (1/(i-1)) * sum_{j<i} (p[i-1][j] - p[i][j]) for i = 2..N;
/// mean over those i. Positive means earlier tasks got worse.
TaskSeries forgetting(const PerfMatrix& P);

/// T_i = (1/(N-i)) * sum_{j>i} (p[i][j] - p[i-1][j]) for i = 1..N-1;
/// mean over those i. Uses row 0 as the untrained reference.
TaskSeries forward_transfer(const PerfMatrix& P);

struct SeedMetrics {
    std::uint64_t seed = 0;
    std::vector<double> R;  // R_1..R_N
    double R_final = 0.0;   // R_N, the headline score
    TaskSeries F;
    TaskSeries T;
};

SeedMetrics compute_metrics(const PerfMatrix& P, std::uint64_t seed);

struct Aggregate {
    int n = 0;
    double mean = 0.0;
    double sem = 0.0;    // sample sd / sqrt(n); 0 by convention when n = 1
    double ci_lo = 0.0;  // mean -+ 1.96 * sem (normal approximation)
    double ci_hi = 0.0;
};

Aggregate aggregate_scalar(const std::vector<double>& values);

struct MetricReport {
    std::vector<SeedMetrics> per_seed;
    Aggregate R_final;
    Aggregate F_mean;
    Aggregate T_mean;
};

MetricReport aggregate(const std::vector<SeedMetrics>& per_seed);

/// Streaming CSV writer for evaluation rows. Columns are fixed:
/// seed,trained_after_task,eval_task,mean_return. Rows arrive in run order;
/// when several rows share (trained_after_task, eval_task) the last one wins
/// (periodic rows during a task are superseded by the boundary row).
class PerfWriter {
public:
    PerfWriter() = default;
    explicit PerfWriter(const std::string& path);
    ~PerfWriter();
    PerfWriter(PerfWriter&&) noexcept;
    PerfWriter& operator=(PerfWriter&&) noexcept;

    void row(std::uint64_t seed, int trained_after, int task, double mean_return);
    void close();

private:
    void* f_ = nullptr;
};

/// Read rows back into per-seed matrices, last row winning per cell.
std::map<std::uint64_t, PerfMatrix> load_perf_csv(const std::string& path);

}  // namespace cldc::metrics
