// Acceptance gate: every release-blocking property in one binary, one
// PASS/FAIL line each. Exit code 0 only when all nine hold.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "hahe/autodiff.hpp"
#include "hahe/checkpoint.hpp"
#include "hahe/eval.hpp"
#include "hahe/graph.hpp"
#include "hahe/metapath.hpp"
#include "hahe/metrics.hpp"
#include "hahe/model.hpp"
#include "hahe/rng.hpp"
#include "hahe/synth.hpp"
#include "hahe/train.hpp"
#include "test_util.hpp"

using namespace hahe;
using ad::Tape;
using ad::Value;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* pattern, ...) {
  va_list args;
  va_start(args, pattern);
  char buf[512];
  std::vsnprintf(buf, sizeof buf, pattern, args);
  va_end(args);
  return buf;
}

// ---- shared fixtures -------------------------------------------------------

// Graph plus per-path normalized rows and full neighbor sets.
struct Pipeline {
  TypedGraph g;
  TargetSet target;
  std::vector<NormalizedAdjacency> adj;
  std::vector<std::vector<std::vector<std::size_t>>> nbrs;
};

Pipeline make_pipeline(const std::string& nodes, const std::string& edges,
                       const std::string& target_type,
                       const std::vector<std::string>& paths) {
  Pipeline p;
  p.g = test_util::make_graph(nodes, edges);
  p.target = select_target(p.g, target_type);
  for (const auto& spec : paths) {
    auto path = parse_metapath(p.g, spec, target_type);
    auto counts = commuting_matrix(p.g, p.target, path);
    p.adj.push_back(normalize_rows(counts));
    p.nbrs.push_back(neighbor_sets(counts));
  }
  return p;
}

// Ten nodes, two meta paths: authors joined through papers and paper-paper
// links, rich enough to exercise every parameter tensor.
Pipeline ten_node_fixture() {
  return make_pipeline(
      "a0\tA\na1\tA\na2\tA\na3\tA\na4\tA\na5\tA\np0\tP\np1\tP\np2\tP\np3\tP\n",
      "a0\tp0\tAP\na1\tp0\tAP\na1\tp1\tAP\na2\tp1\tAP\na3\tp2\tAP\n"
      "a4\tp2\tAP\na4\tp3\tAP\na5\tp3\tAP\na0\tp2\tAP\n"
      "p0\tp1\tPP\np2\tp3\tPP\np1\tp2\tPP\n",
      "A", {"APA", "APPA"});
}

Tensor random_matrix(Rng& rng, std::size_t r, std::size_t c, double scale) {
  Tensor t({r, c});
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-scale, scale);
  return t;
}

Tensor random_vector(Rng& rng, std::size_t n, double scale) {
  Tensor t({n});
  for (std::size_t i = 0; i < n; ++i) t[i] = rng.uniform(-scale, scale);
  return t;
}

ModelParams random_params(Rng& rng, std::size_t n_t, std::size_t m,
                          std::size_t d, std::size_t k, std::size_t classes,
                          double scale = 0.5) {
  ModelParams p;
  p.w_f.resize(m);
  for (std::size_t pi = 0; pi < m; ++pi) {
    p.w_f[pi].push_back(random_matrix(rng, n_t, d, scale));
    p.w_c.push_back(random_matrix(rng, 2 * d, d, scale));
  }
  p.w_p = random_matrix(rng, d, k, scale);
  p.b_p = random_vector(rng, k, scale);
  p.pref = random_matrix(rng, n_t, k, scale);
  p.w_cls = random_matrix(rng, d, classes, scale);
  p.b_cls = random_vector(rng, classes, scale);
  return p;
}

std::vector<Tensor> pack_params(ModelParams& p) {
  std::vector<Tensor> out;
  for (auto& [name, tensor] : p.registry()) out.push_back(*tensor);
  return out;
}

TapeParams unpack_leaves(const std::vector<Value>& leaves, std::size_t m,
                         std::size_t depth) {
  TapeParams tp;
  std::size_t at = 0;
  tp.w_f.resize(m);
  for (std::size_t pi = 0; pi < m; ++pi) {
    for (std::size_t l = 0; l < depth; ++l) tp.w_f[pi].push_back(leaves[at++]);
    tp.w_c.push_back(leaves[at++]);
  }
  tp.w_p = leaves[at++];
  tp.b_p = leaves[at++];
  tp.pref = leaves[at++];
  tp.w_cls = leaves[at++];
  tp.b_cls = leaves[at++];
  return tp;
}

// ---- 1: path counting vs exhaustive walk enumeration -----------------------

// Random HIN over a type chain A-P(-V(-W)) plus P-P links; <= 50 nodes.
TypedGraph random_hin(Rng& rng, std::size_t n_types) {
  const std::size_t n_a = 3 + rng.below(12);
  const std::size_t n_p = 3 + rng.below(12);
  const std::size_t n_v = n_types >= 3 ? 1 + rng.below(4) : 0;
  const std::size_t n_w = n_types >= 4 ? 1 + rng.below(3) : 0;
  std::string nodes, edges;
  for (std::size_t i = 0; i < n_a; ++i)
    nodes += "a" + std::to_string(i) + "\tA\n";
  for (std::size_t i = 0; i < n_p; ++i)
    nodes += "p" + std::to_string(i) + "\tP\n";
  for (std::size_t i = 0; i < n_v; ++i)
    nodes += "v" + std::to_string(i) + "\tV\n";
  for (std::size_t i = 0; i < n_w; ++i)
    nodes += "w" + std::to_string(i) + "\tW\n";
  // The first pair of every relation is forced so each spec stays parseable
  // even when the random draws produce no other edge of that relation.
  for (std::size_t i = 0; i < n_a; ++i)
    for (std::size_t j = 0; j < n_p; ++j)
      if (rng.bernoulli(0.25) || (i == 0 && j == 0))
        edges += "a" + std::to_string(i) + "\tp" + std::to_string(j) + "\tAP\n";
  for (std::size_t i = 0; i < n_p; ++i)
    for (std::size_t j = 0; j < n_v; ++j)
      if (rng.bernoulli(0.25) || (i == 0 && j == 0))
        edges += "p" + std::to_string(i) + "\tv" + std::to_string(j) + "\tPV\n";
  for (std::size_t i = 0; i < n_v; ++i)
    for (std::size_t j = 0; j < n_w; ++j)
      if (rng.bernoulli(0.25) || (i == 0 && j == 0))
        edges += "v" + std::to_string(i) + "\tw" + std::to_string(j) + "\tVW\n";
  for (std::size_t i = 0; i < n_p; ++i)
    for (std::size_t j = i + 1; j < n_p; ++j)
      if (rng.bernoulli(0.125) || (i == 0 && j == 1))
        edges += "p" + std::to_string(i) + "\tp" + std::to_string(j) + "\tPP\n";
  return test_util::make_graph(nodes, edges);
}

bool check_oracle_equivalence(std::string& detail) {
  auto start = Clock::now();
  std::size_t pairs = 0;
  for (int trial = 0; trial < 50; ++trial) {
    Rng rng(9100 + trial, "probe");
    const std::size_t n_types = 2 + trial % 3;
    TypedGraph g = random_hin(rng, n_types);
    auto target = select_target(g, "A");
    std::vector<std::string> specs = {"APA", "APPA", "APPPA"};
    if (n_types >= 3) specs.push_back("APVPA");
    for (const auto& spec : specs) {
      MetaPath path = parse_metapath(g, spec, "A");
      PathCounts counts = commuting_matrix(g, target, path);
      for (std::size_t i = 0; i < target.size(); ++i) {
        for (std::size_t j = 0; j < target.size(); ++j) {
          ++pairs;
          if (counts.at(i, j) != enumerate_bruteforce(g, target, path, i, j)) {
            detail = fmt("mismatch at trial %d %s (%zu,%zu)", trial,
                         spec.c_str(), i, j);
            return false;
          }
        }
      }
    }
  }
  double elapsed = seconds_since(start);
  detail = fmt("50 graphs, %zu entries, %.1f s", pairs, elapsed);
  return elapsed < 30.0;
}

// ---- 2: end-to-end gradient vs central differences -------------------------

bool check_gradients(std::string& detail) {
  auto start = Clock::now();
  auto pipe = ten_node_fixture();
  HyperParams hp;
  hp.d = 4;
  hp.k = 3;
  const std::size_t m = pipe.adj.size();
  Rng rng(1214, "probe");
  ModelParams params =
      random_params(rng, pipe.target.size(), m, hp.d, hp.k, 2, 0.4);

  std::vector<std::size_t> batch = {0, 1, 2, 3, 4, 5};
  std::vector<std::vector<int>> labels = {{0}, {1}, {0}, {1}, {0}, {1}};
  ad::BuildFn build = [&](Tape& t, const std::vector<Value>& leaves) {
    auto tp = unpack_leaves(leaves, m, 1);
    auto fwd = forward_batch(t, tp, hp, pipe.adj, pipe.nbrs, batch);
    return cross_entropy_loss(t, fwd.scores, labels, TaskMode::kSingleLabel, 2);
  };
  auto packed = pack_params(params);
  std::size_t coords = 0;
  for (const Tensor& t : packed) coords += t.numel();
  double err = ad::grad_check(build, packed);
  double elapsed = seconds_since(start);
  detail = fmt("%zu tensors, %zu coordinates, max rel err %.2e, %.1f s",
               packed.size(), coords, err, elapsed);
  return err < 1e-4 && elapsed < 60.0;
}

// ---- 3: attention rows are strictly positive distributions -----------------

bool check_normalization(std::string& detail) {
  auto pipe = ten_node_fixture();
  HyperParams hp;
  hp.d = 4;
  hp.k = 3;
  std::vector<std::size_t> batch = {0, 1, 2, 3, 4, 5};
  std::size_t alpha_rows = 0, gamma_rows = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    Rng rng(3000 + trial, "probe");
    ModelParams params =
        random_params(rng, pipe.target.size(), pipe.adj.size(), hp.d, hp.k, 2);
    Tape t;
    auto fwd =
        forward_batch(t, make_leaves(t, params), hp, pipe.adj, pipe.nbrs, batch);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const Tensor& gamma = t.value(fwd.gamma[b]);
      double gsum = 0.0;
      for (std::size_t j = 0; j < gamma.numel(); ++j) {
        if (!(gamma[j] > 0.0)) {
          detail = fmt("gamma not positive at trial %d", trial);
          return false;
        }
        gsum += gamma[j];
      }
      if (std::fabs(gsum - 1.0) > 1e-10) {
        detail = fmt("gamma sum off by %.2e at trial %d", gsum - 1.0, trial);
        return false;
      }
      ++gamma_rows;
      for (std::size_t pi = 0; pi < pipe.adj.size(); ++pi) {
        if (!fwd.alpha[b][pi].valid()) continue;
        const Tensor& alpha = t.value(fwd.alpha[b][pi]);
        double asum = 0.0;
        for (std::size_t j = 0; j < alpha.numel(); ++j) {
          if (!(alpha[j] > 0.0)) {
            detail = fmt("alpha not positive at trial %d", trial);
            return false;
          }
          asum += alpha[j];
        }
        if (std::fabs(asum - 1.0) > 1e-10) {
          detail = fmt("alpha sum off by %.2e at trial %d", asum - 1.0, trial);
          return false;
        }
        ++alpha_rows;
      }
    }
  }
  detail = fmt("1000 forwards, %zu alpha rows, %zu gamma rows, all 1 +/- 1e-10",
               alpha_rows, gamma_rows);
  return true;
}

// ---- 4: neighbor attention ignores feature-transform scale -----------------

bool check_scale_invariance(std::string& detail) {
  auto pipe = ten_node_fixture();
  HyperParams hp;
  hp.d = 4;
  hp.k = 3;
  Rng rng(1209, "probe");
  ModelParams params =
      random_params(rng, pipe.target.size(), pipe.adj.size(), hp.d, hp.k, 2);
  std::vector<std::size_t> batch = {0, 1, 2, 3, 4, 5};

  Tape base_tape;
  auto base = forward_batch(base_tape, make_leaves(base_tape, params), hp,
                            pipe.adj, pipe.nbrs, batch);
  double worst = 0.0;
  for (double c : {0.5, 2.0, 10.0}) {
    ModelParams scaled = params;
    for (auto& chain : scaled.w_f)
      for (auto& layer : chain)
        for (std::size_t i = 0; i < layer.numel(); ++i) layer[i] *= c;
    Tape t;
    auto fwd = forward_batch(t, make_leaves(t, scaled), hp, pipe.adj,
                             pipe.nbrs, batch);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      for (std::size_t pi = 0; pi < pipe.adj.size(); ++pi) {
        if (!base.alpha[b][pi].valid()) continue;
        const Tensor& want = base_tape.value(base.alpha[b][pi]);
        const Tensor& got = t.value(fwd.alpha[b][pi]);
        for (std::size_t j = 0; j < want.numel(); ++j)
          worst = std::max(worst, std::fabs(got[j] - want[j]));
      }
    }
  }
  detail = fmt("scales {0.5, 2, 10}, max alpha drift %.2e", worst);
  return worst <= 1e-10;
}

// ---- 5: averaging fusion equals attention with uniform weights -------------

bool check_ablation_identity(std::string& detail) {
  auto pipe = ten_node_fixture();
  HyperParams hp;
  hp.d = 4;
  hp.k = 3;
  Rng rng(1210, "probe");
  ModelParams params =
      random_params(rng, pipe.target.size(), pipe.adj.size(), hp.d, hp.k, 2);
  std::vector<std::size_t> batch = {0, 1, 2, 3, 4, 5};

  Tape ta;
  HyperParams avg_hp = hp;
  avg_hp.fusion = Fusion::kAvg;
  auto avg = forward_batch(ta, make_leaves(ta, params), avg_hp, pipe.adj,
                           pipe.nbrs, batch);
  Tape tu;
  ForwardOptions opt;
  opt.force_uniform_gamma = true;
  auto uni = forward_batch(tu, make_leaves(tu, params), hp, pipe.adj,
                           pipe.nbrs, batch, opt);
  double worst = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Tensor& ha = ta.value(avg.h[b]);
    const Tensor& hu = tu.value(uni.h[b]);
    for (std::size_t c = 0; c < hp.d; ++c)
      worst = std::max(worst, std::fabs(ha[c] - hu[c]));
  }
  detail = fmt("max embedding drift %.2e", worst);
  return worst <= 1e-12;
}

// ---- 6: planted informative path is found and helps ------------------------

bool check_planted_recovery(std::string& detail) {
  auto start = Clock::now();
  SynthConfig sc;
  sc.n_target = 300;
  sc.n_classes = 2;
  sc.seed = 0;
  sc.paths = {{6, 0.8, 0.05}, {300, 0.3, 0.3}};
  SynthResult data = generate_planted_hin(sc);

  auto target = select_target(data.graph, "T");
  std::vector<PathCounts> counts;
  for (const auto& spec : data.metapaths) {
    auto path = parse_metapath(data.graph, spec, "T");
    counts.push_back(commuting_matrix(data.graph, target, path));
  }

  TrainConfig base;
  base.learning_rate = 0.01;
  base.batch_size = 512;
  base.d = 64;
  base.k = 64;
  base.sample_size = 10;
  base.max_epochs = 300;
  base.patience = 300;
  base.train_frac = 0.1;
  base.val_frac = 0.1;

  double att_sum = 0.0, avg_sum = 0.0;
  double min_att = 1.0, worst_gap = 1.0;
  int gamma_wins = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    TrainConfig cfg = base;
    cfg.seed = seed;
    cfg.fusion = Fusion::kAttention;
    TrainedModel att = train(data.graph, "T", data.metapaths, cfg, &counts);
    double att_f1 = evaluate_split(att, att.test_nodes).micro_f1;

    double g_inf = 0.0, g_noise = 0.0;
    for (std::size_t i = 0; i < att.gamma.rows(); ++i) {
      g_inf += att.gamma.at(i, 0);
      g_noise += att.gamma.at(i, 1);
    }
    if (g_inf > g_noise) ++gamma_wins;

    cfg.fusion = Fusion::kAvg;
    TrainedModel avg = train(data.graph, "T", data.metapaths, cfg, &counts);
    double avg_f1 = evaluate_split(avg, avg.test_nodes).micro_f1;

    att_sum += att_f1;
    avg_sum += avg_f1;
    min_att = std::min(min_att, att_f1);
    worst_gap = std::min(worst_gap, att_f1 - avg_f1);
  }
  double elapsed = seconds_since(start);
  detail = fmt(
      "att mean %.4f (min %.4f), avg mean %.4f, worst gap %+.4f, "
      "gamma ordered %d/10, %.0f s",
      att_sum / 10.0, min_att, avg_sum / 10.0, worst_gap, gamma_wins, elapsed);
  return min_att >= 0.90 && gamma_wins >= 9 && worst_gap >= -0.02 &&
         att_sum > avg_sum && elapsed < 300.0;
}

// ---- 7: training is bitwise deterministic ----------------------------------

int run_tool(const std::string& args) {
  std::string cmd = std::string(HAHE_TOOL_PATH) + " " + args;
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return in.good() ? os.str() : std::string();
}

bool check_determinism(std::string& detail) {
  test_util::TempDir dir;
  std::string data = dir.file("data");
  if (run_tool("synth --out " + data +
               " --n-target 40 --classes 2 --seed 11"
               " --path 10,0.9,0.1 --path 10,0.3,0.3 > /dev/null") != 0) {
    detail = "synth invocation failed";
    return false;
  }
  std::string cfg = dir.write("train.cfg",
                              "learning_rate = 0.02\nbatch_size = 16\n"
                              "dim = 8\npref_dim = 4\nsample_size = 5\n"
                              "max_epochs = 12\npatience = 12\nseed = 7\n"
                              "train_frac = 0.4\nval_frac = 0.2\n");
  std::string flags = "--nodes " + data + "/nodes.tsv --edges " + data +
                      "/edges.tsv --labels " + data +
                      "/labels.tsv --target-type T --metapath T,C0,T "
                      "--metapath T,C1,T --config " + cfg;
  for (const char* run : {"a", "b"}) {
    std::string name(run);
    if (run_tool("train " + flags + " --out " + dir.file(name + ".ckpt") +
                 " > /dev/null") != 0 ||
        run_tool("eval --checkpoint " + dir.file(name + ".ckpt") +
                 " --split test --out " + dir.file(name + ".report") +
                 " > /dev/null") != 0) {
      detail = "train or eval invocation failed";
      return false;
    }
  }
  std::string ckpt = slurp(dir.file("a.ckpt"));
  bool same_ckpt = !ckpt.empty() && ckpt == slurp(dir.file("b.ckpt"));
  std::string report = slurp(dir.file("a.report"));
  bool same_report = !report.empty() && report == slurp(dir.file("b.report"));
  detail = fmt("checkpoint bytes %s (%zu), reports %s",
               same_ckpt ? "identical" : "DIFFER", ckpt.size(),
               same_report ? "identical" : "DIFFER");
  return same_ckpt && same_report;
}

// ---- 8: per-step cost grows at most linearly in path count -----------------

bool check_complexity(std::string& detail) {
  SynthConfig sc;
  sc.n_target = 200;
  sc.n_classes = 2;
  sc.seed = 3;
  sc.paths = {{30, 0.5, 0.2}, {30, 0.5, 0.2}, {30, 0.5, 0.2}, {30, 0.5, 0.2}};
  SynthResult data = generate_planted_hin(sc);
  auto target = select_target(data.graph, "T");
  std::vector<PathCounts> counts4;
  for (const auto& spec : data.metapaths) {
    auto path = parse_metapath(data.graph, spec, "T");
    counts4.push_back(commuting_matrix(data.graph, target, path));
  }
  std::vector<PathCounts> counts2(counts4.begin(), counts4.begin() + 2);
  std::vector<std::string> paths2(data.metapaths.begin(),
                                  data.metapaths.begin() + 2);

  TrainConfig cfg;
  cfg.learning_rate = 0.005;
  cfg.batch_size = 32;
  cfg.d = 16;
  cfg.k = 8;
  cfg.sample_size = 10;
  cfg.max_epochs = 20;
  cfg.patience = 20;
  cfg.seed = 19;
  cfg.train_frac = 0.4;
  cfg.val_frac = 0.1;

  // Same graph, labels, and batch size; only the path count changes. Two
  // timed repetitions each, keeping the faster one to damp scheduler noise.
  auto time_variant = [&](const std::vector<std::string>& specs,
                          const std::vector<PathCounts>& counts) {
    double best = 1e100;
    for (int rep = 0; rep < 2; ++rep) {
      auto start = Clock::now();
      train(data.graph, "T", specs, cfg, &counts);
      best = std::min(best, seconds_since(start));
    }
    return best;
  };
  double t2 = time_variant(paths2, counts2);
  double t4 = time_variant(data.metapaths, counts4);
  double ratio = t4 / t2;
  detail = fmt("2 paths %.2f s, 4 paths %.2f s, ratio %.2f", t2, t4, ratio);
  return ratio <= 2.5;
}

// ---- 9: micro/macro F1 vs confusion-matrix recount --------------------------

MetricReport brute_force_f1(const std::vector<std::vector<int>>& preds,
                            const std::vector<std::vector<int>>& truths,
                            std::size_t n_classes) {
  const std::size_t n = preds.size();
  std::vector<std::vector<int>> p(n, std::vector<int>(n_classes, 0));
  std::vector<std::vector<int>> t(n, std::vector<int>(n_classes, 0));
  for (std::size_t i = 0; i < n; ++i) {
    for (int l : preds[i]) p[i][l] = 1;
    for (int l : truths[i]) t[i][l] = 1;
  }
  MetricReport rep;
  rep.n_eval = n;
  rep.per_class.resize(n_classes);
  long tp = 0, fp = 0, fn = 0;
  double f1_sum = 0.0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    long ctp = 0, cfp = 0, cfn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      ctp += p[i][c] & t[i][c];
      cfp += p[i][c] & (1 - t[i][c]);
      cfn += (1 - p[i][c]) & t[i][c];
    }
    tp += ctp;
    fp += cfp;
    fn += cfn;
    double prec = ctp + cfp > 0 ? double(ctp) / double(ctp + cfp) : 0.0;
    double rec = ctp + cfn > 0 ? double(ctp) / double(ctp + cfn) : 0.0;
    f1_sum += prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
  }
  rep.micro_f1 = 2 * tp + fp + fn > 0
                     ? 2.0 * double(tp) / double(2 * tp + fp + fn)
                     : 0.0;
  rep.macro_f1 = f1_sum / double(n_classes);
  return rep;
}

bool check_metric_correctness(std::string& detail) {
  Rng rng(9024, "probe");
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(200);
    const std::size_t n_classes = 2 + rng.below(5);
    std::vector<std::vector<int>> preds(n), truths(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < n_classes; ++c) {
        if (rng.bernoulli(0.3)) preds[i].push_back(static_cast<int>(c));
        if (rng.bernoulli(0.3)) truths[i].push_back(static_cast<int>(c));
      }
    }
    auto got = micro_macro_f1(preds, truths, n_classes);
    auto want = brute_force_f1(preds, truths, n_classes);
    if (got.micro_f1 != want.micro_f1 || got.macro_f1 != want.macro_f1) {
      detail = fmt("mismatch at trial %d", trial);
      return false;
    }
  }
  detail = "1000 random sets, micro and macro exactly equal";
  return true;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<bool(std::string&)> fn;
  };
  const std::vector<Criterion> criteria = {
      {1, "path counts match exhaustive enumeration", check_oracle_equivalence},
      {2, "loss gradient passes finite differences", check_gradients},
      {3, "attention rows are positive and sum to one", check_normalization},
      {4, "neighbor attention ignores transform scale", check_scale_invariance},
      {5, "averaging fusion equals forced-uniform attention",
       check_ablation_identity},
      {6, "planted informative path is recovered and helps",
       check_planted_recovery},
      {7, "training runs are bitwise reproducible", check_determinism},
      {8, "per-step cost stays linear in path count", check_complexity},
      {9, "F1 metrics match confusion-matrix recount", check_metric_correctness},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    std::string detail;
    bool pass = false;
    try {
      pass = c.fn(detail);
    } catch (const std::exception& e) {
      detail = fmt("exception: %s", e.what());
    }
    if (!pass) ++failures;
    std::printf("[%s] %d %s (%s)\n", pass ? "PASS" : "FAIL", c.id, c.name,
                detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/9 criteria passed\n", 9 - failures);
  return failures == 0 ? 0 : 1;
}
