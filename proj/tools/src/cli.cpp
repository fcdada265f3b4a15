#include "segvit_cli/cli.hpp"

#include <CLI11.hpp>

#include <exception>
#include <optional>
#include <string>

#include "segvit/config.hpp"
#include "segvit/cost_model.hpp"
#include "segvit/dataset.hpp"
#include "segvit/netpbm.hpp"
#include "segvit/pipeline.hpp"

namespace segvit {

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

RunConfig resolve_config(const Globals& g) {
  RunConfig cfg = g.config.empty() ? default_run_config() : load_run_config(g.config);
  if (g.seed) {
    cfg.seed = *g.seed;
    cfg.data.seed = *g.seed;
  }
  cfg.validate();
  return cfg;
}

std::string out_or(const Globals& g, const std::string& fallback) {
  return g.out.empty() ? fallback : g.out;
}

}  // namespace

int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Toy semantic segmentation with plain vision transformers", "segvit"};
  app.require_subcommand(0, 1);
  Globals g;
  app.add_option("--config", g.config, "Run configuration file (key = value)");
  app.add_option("--seed", g.seed, "Override model and data seeds");
  app.add_option("--out", g.out, "Output directory or file");

  auto* gen = app.add_subcommand("gen-data", "Write the synthetic dataset as PPM/PGM files");

  auto* train = app.add_subcommand("train", "Train a model and write checkpoint and logs");

  std::string checkpoint, data_dir;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the validation split");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint path")->required();
  eval->add_option("--data", data_dir, "Dataset directory (default: regenerate from config)");

  std::string image_path;
  auto* infer = app.add_subcommand("infer", "Predict a label map (P5) for one P6 image");
  infer->add_option("--checkpoint", checkpoint, "Checkpoint path")->required();
  infer->add_option("--image", image_path, "Input P6 image")->required();

  std::string preset, format = "tsv";
  bool compare = false;
  auto* cost = app.add_subcommand("cost", "Analytic multiply-accumulate counts");
  cost->add_option("--preset", preset, "Preset name")
      ->check(CLI::IsMember(preset_names()));
  cost->add_option("--format", format, "tsv or json")->check(CLI::IsMember({"tsv", "json"}));
  cost->add_flag("--compare", compare, "Table over every preset with published values");

  auto* cl = app.add_subcommand("cl-run", "Continual-learning run over cl.tasks");

  if (argc <= 1) {
    err << app.help();
    return 2;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  if (app.get_subcommands().empty()) {
    err << app.help();
    return 2;
  }

  try {
    if (gen->parsed()) {
      const RunConfig cfg = resolve_config(g);
      const std::string dir = out_or(g, "data");
      gen_synthetic_dataset(cfg.data, dir);
      out << "wrote " << cfg.data.train_size << " train and " << cfg.data.val_size << " val samples to "
          << dir << "\n";
    } else if (train->parsed()) {
      const RunConfig cfg = resolve_config(g);
      const std::string dir = out_or(g, "run");
      const TrainOutcome r = run_training(cfg, dir, &err);
      out << format_eval(r.final_eval);
    } else if (eval->parsed()) {
      LoadedModel m = load_model(checkpoint);
      const std::vector<Sample> data = data_dir.empty()
                                           ? make_split(m.cfg.data, Split::kVal)
                                           : load_split(data_dir, Split::kVal, m.cfg.model.num_classes);
      out << format_eval(evaluate_model(m.store, m.cfg.model, data));
    } else if (infer->parsed()) {
      LoadedModel m = load_model(checkpoint);
      const Image img = read_ppm(image_path);
      const LabelMap pred = model_predict(m.store, image_to_tensor(img), m.cfg.model);
      const std::string dest = out_or(g, "prediction.pgm");
      write_pgm(dest, pred);
      out << "wrote " << dest << "\n";
    } else if (cost->parsed()) {
      if (compare) {
        std::vector<ArchPreset> all;
        for (const std::string& n : preset_names()) all.push_back(preset_by_name(n));
        out << (format == "json" ? compare_report_json(all) : compare_report(all));
      } else {
        if (preset.empty()) {
          err << "error: cost needs --preset or --compare\n";
          return 2;
        }
        const CostReport r = count_variant_macs(preset_by_name(preset));
        out << (format == "json" ? report_json(r) : report_tsv(r));
      }
    } else if (cl->parsed()) {
      const RunConfig cfg = resolve_config(g);
      const ClOutcome r = run_continual(cfg, out_or(g, "cl_run"), &err);
      out << forgetting_table(r.forgetting);
      out << "raw_output_drift " << r.raw_output_drift << "\n";
      out << "head1_outputs_identical " << (r.head_outputs_identical ? "yes" : "no") << "\n";
      out << "frozen_checksums_equal " << (r.frozen_checksums_equal ? "yes" : "no") << "\n";
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace segvit
