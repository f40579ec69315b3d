// Copyright 2026 The SVT-Net Authors
// SPDX-License-Identifier: Apache-2.0

// svtnet: dataset generation, training, embedding, evaluation and diagnostics.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "svtnet/gradcheck.hpp"
#include "svtnet/io.hpp"
#include "svtnet/log.hpp"
#include "svtnet/model.hpp"
#include "svtnet/retrieval.hpp"
#include "svtnet/synth.hpp"
#include "svtnet/training.hpp"

namespace fs = std::filesystem;
using namespace svtnet;

namespace {

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  return os;
}

struct GenSynthArgs {
  fs::path out;
  std::uint64_t seed = 0;
  SyntheticSceneSpec spec;
  bool force = false;
};

int run_gen_synth(const GenSynthArgs& a) {
  SyntheticSceneSpec spec = a.spec;
  spec.seed = a.seed;
  const auto rows = gen_synth(spec, a.out, a.force);
  std::cout << "wrote " << rows.size() << " clouds and index.csv to " << a.out.string() << '\n';
  return 0;
}

struct VoxelizeArgs {
  fs::path input;
  fs::path out;
  double quant_step = 0.01;
};

int run_voxelize(const VoxelizeArgs& a) {
  const SparseVoxelGrid grid = voxelize(read_point_cloud(a.input), a.quant_step);
  std::ofstream os = open_out(a.out);
  for (const Coord& c : grid.coords) os << c[0] << ' ' << c[1] << ' ' << c[2] << '\n';
  std::cout << grid.size() << " voxels\n";
  return 0;
}

std::vector<TrainSample> load_samples(const std::vector<IndexRow>& rows, const std::string& split) {
  std::vector<TrainSample> samples;
  for (const IndexRow& r : rows) {
    if (r.split != split) continue;
    samples.push_back({r.path.stem().string(), read_point_cloud(r.path), {r.northing, r.easting}});
  }
  return samples;
}

struct TrainArgs {
  fs::path index;
  fs::path out;
  fs::path config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> variant;
  std::optional<std::int64_t> iterations;
  std::optional<int> epochs;
};

int run_train(const TrainArgs& a) {
  TrainConfig config = a.config.empty() ? TrainConfig::baseline() : read_train_config(a.config);
  if (a.seed) config.seed = *a.seed;
  if (a.variant) config.model.variant = parse_variant(*a.variant);
  if (a.iterations) config.max_iterations = *a.iterations;
  if (a.epochs) config.epochs = *a.epochs;
  config.checkpoint_dir = a.out / "epochs";

  const auto samples = load_samples(read_index(a.index), "train");
  if (samples.empty()) throw std::runtime_error("index has no train rows");
  const TrainResult result = train(samples, config);
  result.net.save(a.out / "model.ckpt");
  write_epoch_log_csv(a.out / "train_log.csv", result.log);
  std::cout << "trained " << result.iterations << " iterations over " << result.log.size() << " epochs; wrote "
            << (a.out / "model.ckpt").string() << '\n';
  return 0;
}

SvtNet load_checkpoint(const fs::path& path, const std::optional<std::string>& variant) {
  return variant ? SvtNet::load(path, parse_variant(*variant)) : SvtNet::load(path);
}

struct EmbedArgs {
  fs::path index;
  fs::path checkpoint;
  fs::path out;
  std::optional<std::string> variant;
  int workers = 1;
};

int run_embed(const EmbedArgs& a) {
  const SvtNet net = load_checkpoint(a.checkpoint, a.variant);
  const auto rows = read_index(a.index);
  for (const auto& [split, file] : {std::pair<std::string, std::string>{"train", "db.csv"}, {"test", "queries.csv"}}) {
    DescriptorDB db;
    std::vector<PointCloud> clouds;
    for (const IndexRow& r : rows) {
      if (r.split != split) continue;
      clouds.push_back(read_point_cloud(r.path));
      db.positions.push_back({r.northing, r.easting});
      db.ids.push_back(r.path.stem().string());
    }
    db.descriptors = clouds.empty() ? Matrix(0, net.config.output_dim()) : net.embed_all(clouds, a.workers);
    fs::create_directories(a.out);
    write_descriptor_csv(a.out / file, db);
    std::cout << "wrote " << db.size() << " descriptors to " << (a.out / file).string() << '\n';
  }
  return 0;
}

struct EvalArgs {
  std::vector<fs::path> db;
  std::vector<fs::path> queries;
  std::vector<std::string> tags;
  fs::path out;
  std::size_t max_n = 25;
  double radius = 25.0;
};

int run_eval(const EvalArgs& a) {
  if (a.db.size() != a.queries.size()) throw std::invalid_argument("--db and --queries must be given in pairs");
  if (!a.tags.empty() && a.tags.size() != a.db.size())
    throw std::invalid_argument("--tag must be given once per --db/--queries pair");
  std::vector<DatasetMetrics> rows;
  for (std::size_t i = 0; i < a.db.size(); ++i) {
    const std::string tag = a.tags.empty() ? (a.db.size() == 1 ? "dataset" : "dataset" + std::to_string(i)) : a.tags[i];
    rows.push_back(evaluate_dataset(tag, read_descriptor_csv(a.db[i]), read_descriptor_csv(a.queries[i]), a.max_n,
                                    EvalProtocol{a.radius}));
  }
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    write_recall_curve_csv(a.out / "recall_curve.csv", rows);
    write_summary_csv(a.out / "summary.csv", rows);
  }
  std::cout << format_recall_table(rows);
  std::cout << std::setprecision(6);
  for (const DatasetMetrics& m : rows) {
    std::cout << "summary dataset=" << m.tag << " recall@1=" << m.recall_at_1
              << " recall@1%=" << m.recall_at_one_percent << " n1%=" << m.one_percent_n
              << " evaluated=" << m.evaluated << " excluded=" << m.excluded << '\n';
  }
  return 0;
}

struct ParamsArgs {
  std::string variant = "svt";
  std::string fusion = "add";
};

int run_params(const ParamsArgs& a) {
  ModelConfig config;
  config.variant = parse_variant(a.variant);
  config.fusion = parse_fusion(a.fusion);
  const ParamReport report = SvtNet::build(config, 0).count_params();
  std::cout << std::left << std::setw(14) << "block" << std::setw(8) << "kernel" << std::setw(8) << "stride"
            << std::setw(6) << "in" << std::setw(6) << "out" << std::right << std::setw(10) << "params" << '\n';
  for (const BlockCount& b : report.blocks) {
    std::cout << std::left << std::setw(14) << b.block << std::setw(8) << b.kernel << std::setw(8) << b.stride
              << std::setw(6) << (b.in_channels > 0 ? std::to_string(b.in_channels) : "-") << std::setw(6)
              << (b.out_channels > 0 ? std::to_string(b.out_channels) : "-") << std::right << std::setw(10)
              << b.params << '\n';
  }
  std::cout << std::left << std::setw(42) << "Total Parameters" << std::right << std::setw(10) << report.total << " ("
            << std::fixed << std::setprecision(3) << static_cast<double>(report.total) / 1e6 << "M)\n";
  return 0;
}

struct CheckGradsArgs {
  bool tiny = false;
  std::uint64_t seed = 0;
};

int run_check_grads(const CheckGradsArgs& a) {
  std::vector<GradCheckResult> results = check_op_grads(a.seed);
  for (GradCheckResult& r : check_layer_grads(a.seed)) results.push_back(std::move(r));
  if (!a.tiny) {
    for (Variant v : {Variant::kSvt, Variant::kAsvtOnly, Variant::kCsvtOnly}) {
      for (Mode mode : {Mode::kEval, Mode::kTrain}) results.push_back(check_model_grads(a.seed, v, mode));
    }
  }
  std::size_t failed = 0;
  for (const GradCheckResult& r : results) {
    std::cout << (r.passed() ? "PASS " : "FAIL ") << std::left << std::setw(6) << r.level << std::setw(28) << r.name
              << " max_rel_err=" << std::scientific << std::setprecision(3) << r.error << " tol=" << r.tolerance
              << std::defaultfloat << '\n';
    if (!r.passed()) ++failed;
  }
  if (failed > 0) throw std::runtime_error(std::to_string(failed) + " gradient checks failed");
  return 0;
}

struct DumpArgs {
  fs::path checkpoint;
  fs::path input;
  fs::path out;
  std::optional<std::string> variant;
};

int run_dump_attention(const DumpArgs& a) {
  const SvtNet net = load_checkpoint(a.checkpoint, a.variant);
  if (!net.config.has_asvt()) throw std::runtime_error("checkpoint has no ASVT block");
  const VoxelPyramid pyramid = build_pyramid(read_point_cloud(a.input), net.config.quant_step);
  ForwardTrace trace;
  net.embed(pyramid, &trace);
  const Matrix& s = trace.asvt.attention.at(0);
  const auto& coords = pyramid.final_coords();
  std::ofstream os = open_out(a.out);
  os << "i,j,k";
  for (Eigen::Index c = 0; c < s.cols(); ++c) os << ",a" << c;
  os << '\n' << std::setprecision(17);
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const Coord& c = coords[static_cast<std::size_t>(r)];
    os << c[0] << ',' << c[1] << ',' << c[2];
    for (Eigen::Index col = 0; col < s.cols(); ++col) os << ',' << s(r, col);
    os << '\n';
  }
  std::cout << "wrote " << s.rows() << "x" << s.cols() << " attention map to " << a.out.string() << '\n';
  return 0;
}

int run_dump_tokens(const DumpArgs& a) {
  const SvtNet net = load_checkpoint(a.checkpoint, a.variant);
  if (!net.config.has_csvt()) throw std::runtime_error("checkpoint has no CSVT block");
  const VoxelPyramid pyramid = build_pyramid(read_point_cloud(a.input), net.config.quant_step);
  ForwardTrace trace;
  net.embed(pyramid, &trace);
  const Matrix& grouping = trace.csvt.grouping.at(0);
  const auto& coords = pyramid.final_coords();
  std::ofstream os = open_out(a.out);
  for (Eigen::Index r = 0; r < grouping.rows(); ++r) {
    Eigen::Index token = 0;
    grouping.row(r).maxCoeff(&token);
    const Coord& c = coords[static_cast<std::size_t>(r)];
    os << c[0] << ' ' << c[1] << ' ' << c[2] << ' ' << token << '\n';
  }
  std::cout << "wrote " << grouping.rows() << " voxel token assignments to " << a.out.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging_from_env();

  CLI::App app{"SVT-Net place recognition: synthetic data, training, embedding and evaluation"};
  app.require_subcommand(1);
  std::function<int()> action;

  GenSynthArgs gen;
  auto* c_gen = app.add_subcommand("gen-synth", "Write a synthetic place-recognition dataset");
  c_gen->add_option("--out", gen.out, "Output directory")->required();
  c_gen->add_option("--seed", gen.seed, "Random seed");
  c_gen->add_option("--scenes", gen.spec.scenes, "Number of scenes")->check(CLI::PositiveNumber);
  c_gen->add_option("--copies", gen.spec.copies, "Copies per scene (the last one is the test query)")
      ->check(CLI::PositiveNumber);
  c_gen->add_option("--points", gen.spec.points, "Points per cloud");
  c_gen->add_option("--spacing", gen.spec.spacing, "Scene spacing in meters");
  c_gen->add_flag("--force", gen.force, "Replace a non-empty output directory");
  c_gen->callback([&] { action = [&] { return run_gen_synth(gen); }; });

  VoxelizeArgs vox;
  auto* c_vox = app.add_subcommand("voxelize", "Quantize a point cloud and write occupied voxels as 'i j k'");
  c_vox->add_option("--input", vox.input, "Point cloud (.bin or text)")->required()->check(CLI::ExistingFile);
  c_vox->add_option("--out", vox.out, "Output file")->required();
  c_vox->add_option("--quant-step", vox.quant_step, "Voxel size")->check(CLI::PositiveNumber);
  c_vox->callback([&] { action = [&] { return run_voxelize(vox); }; });

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train on the train rows of an index");
  c_train->add_option("--index", tr.index, "Dataset index.csv")->required()->check(CLI::ExistingFile);
  c_train->add_option("--out", tr.out, "Output directory")->required();
  c_train->add_option("--config", tr.config, "key = value training config")->check(CLI::ExistingFile);
  c_train->add_option("--seed", tr.seed, "Random seed (overrides the config)");
  c_train->add_option("--variant", tr.variant, "svt | asvt | csvt (overrides the config)");
  c_train->add_option("--iterations", tr.iterations, "Stop after this many iterations");
  c_train->add_option("--epochs", tr.epochs, "Number of epochs");
  c_train->callback([&] { action = [&] { return run_train(tr); }; });

  EmbedArgs emb;
  auto* c_embed = app.add_subcommand("embed", "Write db.csv (train rows) and queries.csv (test rows)");
  c_embed->add_option("--index", emb.index, "Dataset index.csv")->required()->check(CLI::ExistingFile);
  c_embed->add_option("--checkpoint", emb.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  c_embed->add_option("--out", emb.out, "Output directory")->required();
  c_embed->add_option("--variant", emb.variant, "Expected variant of the checkpoint");
  c_embed->add_option("--workers", emb.workers, "Worker threads")->check(CLI::PositiveNumber);
  c_embed->callback([&] { action = [&] { return run_embed(emb); }; });

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Recall@1, recall@1% and the recall curve");
  c_eval->add_option("--db", ev.db, "Database descriptor CSV (repeatable)")->required()->check(CLI::ExistingFile);
  c_eval->add_option("--queries", ev.queries, "Query descriptor CSV (repeatable)")->required()->check(CLI::ExistingFile);
  c_eval->add_option("--tag", ev.tags, "Dataset tag per --db/--queries pair");
  c_eval->add_option("--out", ev.out, "Directory for recall_curve.csv and summary.csv");
  c_eval->add_option("--max-n", ev.max_n, "Length of the recall curve")->check(CLI::PositiveNumber);
  c_eval->add_option("--radius", ev.radius, "True-match radius in meters")->check(CLI::PositiveNumber);
  int eval_workers = 1;
  c_eval->add_option("--workers", eval_workers, "Accepted for symmetry with embed")->check(CLI::PositiveNumber);
  c_eval->callback([&] { action = [&] { return run_eval(ev); }; });

  ParamsArgs pa;
  auto* c_params = app.add_subcommand("params", "Per-block parameter counts");
  c_params->add_option("--variant", pa.variant, "svt | asvt | csvt");
  c_params->add_option("--fusion", pa.fusion, "add | concat | concat_conv");
  c_params->callback([&] { action = [&] { return run_params(pa); }; });

  CheckGradsArgs cg;
  auto* c_grads = app.add_subcommand("check-grads", "Finite-difference gradient checks");
  c_grads->add_flag("--tiny", cg.tiny, "Primitive ops and layers only");
  c_grads->add_option("--seed", cg.seed, "Random seed");
  c_grads->callback([&] { action = [&] { return run_check_grads(cg); }; });

  DumpArgs da;
  auto* c_att = app.add_subcommand("dump-attention", "Write the ASVT attention map of one cloud as CSV");
  DumpArgs dt;
  auto* c_tok = app.add_subcommand("dump-tokens", "Write 'i j k token_id' per final-level voxel");
  for (auto [cmd, args] : {std::pair{c_att, &da}, std::pair{c_tok, &dt}}) {
    cmd->add_option("--checkpoint", args->checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
    cmd->add_option("--input", args->input, "Point cloud (.bin or text)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", args->out, "Output file")->required();
    cmd->add_option("--variant", args->variant, "Expected variant of the checkpoint");
  }
  c_att->callback([&] { action = [&] { return run_dump_attention(da); }; });
  c_tok->callback([&] { action = [&] { return run_dump_tokens(dt); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << one_line(e.what()) << '\n';
    return 2;
  }
  try {
    return action();
  } catch (const std::exception& e) {
    std::cerr << "error: " << one_line(e.what()) << '\n';
    return 1;
  }
}
