// facenet: synthetic data generation, pseudo-labelling, training, evaluation
// and mask visualisation for the multi-spectral re-identification model.

#include <exception>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "facenet/errors.hpp"
#include "facenet/flare_synth.hpp"
#include "facenet/pseudo_label.hpp"
#include "facenet/trainer.hpp"

namespace fs = std::filesystem;
using namespace facenet;

namespace {

void print_metrics(const eval::Metrics& m) {
  std::cout << std::fixed << std::setprecision(4) << "mAP " << m.mAP << "  R1 " << m.rank(1) << "  R5 " << m.rank(5)
            << "  R10 " << m.rank(10) << "  (" << m.valid_queries << " queries, " << m.dropped_queries
            << " dropped)\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Flare-aware multi-spectral vehicle re-identification"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("generate-data", "Render a synthetic RGB/NI/TI dataset with known flares");
  fs::path gen_config, gen_out = "synthetic";
  gen->add_option("--config", gen_config, "key=value synthesis config")->check(CLI::ExistingFile);
  gen->add_option("--out", gen_out, "Output dataset directory");

  auto* pl = app.add_subcommand("pseudolabel", "Write pseudo_labels.csv for a dataset");
  fs::path pl_root;
  double pl_bar = pseudo::kDefaultBar;
  pl->add_option("root", pl_root, "Dataset root (directory holding manifest.csv)")->required();
  pl->add_option("--bar", pl_bar, "Bright-pixel fraction above which an image counts as flared");

  auto* tr = app.add_subcommand("train", "Train a model");
  fs::path tr_config, tr_data, tr_out = "run", tr_resume;
  tr->add_option("--config", tr_config, "key=value training config")->check(CLI::ExistingFile);
  tr->add_option("--data", tr_data, "Dataset root or manifest")->required();
  tr->add_option("--out", tr_out, "Run directory");
  tr->add_option("--resume", tr_resume, "Checkpoint to continue from")->check(CLI::ExistingFile);

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  fs::path ev_ckpt, ev_data, ev_out = ".";
  ev->add_option("--ckpt", ev_ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  ev->add_option("--data", ev_data, "Dataset root or manifest")->required();
  ev->add_option("--out", ev_out, "Directory for metrics.json and ranking.csv");

  auto* vis = app.add_subcommand("visualize-masks", "Overlay predicted soft flare masks on the inputs");
  fs::path vis_ckpt, vis_data, vis_out = "masks";
  int vis_limit = 16;
  vis->add_option("--ckpt", vis_ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  vis->add_option("--data", vis_data, "Dataset root or manifest")->required();
  vis->add_option("--out", vis_out, "Output directory")->required();
  vis->add_option("--limit", vis_limit, "Maximum number of samples")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const auto config = gen_config.empty() ? synth::SynthConfig{} : synth::load_synth_config(gen_config);
      const auto result = synth::generate(config, gen_out);
      std::cout << "wrote " << config.num_identities * config.samples_per_identity << " samples ("
                << result.flares.size() << " flared) to " << gen_out << '\n';
    } else if (*pl) {
      const auto rows = pseudo::label_dataset(pl_root, pl_bar);
      const auto out = (fs::is_directory(pl_root) ? pl_root : pl_root.parent_path()) / "pseudo_labels.csv";
      pseudo::write_pseudo_labels(out, rows);
      std::cout << "wrote " << rows.size() << " rows to " << out << '\n';
    } else if (*tr) {
      train::TrainConfig config;
      if (!tr_config.empty()) {
        config = train::load_train_config(tr_config);
      } else if (!tr_resume.empty()) {
        config = train::parse_train_config(KeyValueFile::parse(train::read_checkpoint(tr_resume).config_text));
      }
      train::RunOptions options;
      options.data = tr_data;
      options.out = tr_out;
      if (!tr_resume.empty()) options.resume = tr_resume;
      options.log = &std::cout;
      const auto result = train::run(config, options);
      print_metrics(result.metrics);
      std::cout << "checkpoint " << result.checkpoint << '\n';
    } else if (*ev) {
      const auto model = train::load_model(ev_ckpt);
      const auto samples = data::load_manifest(ev_data, {model->config().input_height, model->config().input_width});
      const auto evaluation = train::evaluate_model(*model, samples);
      fs::create_directories(ev_out);
      eval::write_metrics_json(ev_out / "metrics.json", evaluation.metrics);
      eval::write_ranking_csv(ev_out / "ranking.csv", evaluation.rankings);
      if (evaluation.train_on_train) std::cout << "no query rows; evaluated the training split against itself\n";
      print_metrics(evaluation.metrics);
    } else if (*vis) {
      const auto model = train::load_model(vis_ckpt);
      const auto samples = data::load_manifest(vis_data, {model->config().input_height, model->config().input_width});
      const auto files = train::visualize_masks(*model, samples, vis_out, vis_limit);
      std::cout << "wrote " << files.size() << " images to " << vis_out << '\n';
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
