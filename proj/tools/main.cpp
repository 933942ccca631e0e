// cosyn command-line front end: synthetic corpus generation, preprocessing,
// training, synthesis and evaluation over on-disk corpora.

#include <CLI11.hpp>
#include <iostream>

#include "cosyn/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

cosyn::KeyValueConfig load_config(const std::string& path) {
  if (path.empty()) return {};
  return cosyn::KeyValueConfig::load(path);
}

cosyn::OptimizerConfig optimizer_from(const cosyn::KeyValueConfig& c) {
  cosyn::OptimizerConfig o;
  o.beta1 = c.get("beta1", o.beta1);
  o.beta2 = c.get("beta2", o.beta2);
  o.epsilon = c.get("epsilon", o.epsilon);
  o.gen_lr = c.get("gen_lr", o.gen_lr);
  o.disc_lr = c.get("disc_lr", o.disc_lr);
  o.lr_decay = c.get("lr_decay", o.lr_decay);
  o.batch_size = c.get("batch_size", o.batch_size);
  o.epochs = c.get("epochs", o.epochs);
  o.phoneme_lr = c.get("phoneme_lr", o.phoneme_lr);
  o.phoneme_batch_size = c.get("phoneme_batch_size", o.phoneme_batch_size);
  o.phoneme_epochs = c.get("phoneme_epochs", o.phoneme_epochs);
  return o;
}

cosyn::LossWeights weights_from(const cosyn::KeyValueConfig& c) {
  cosyn::LossWeights w;
  w.lambda_vel = c.get("lambda_vel", w.lambda_vel);
  w.lambda_acc = c.get("lambda_acc", w.lambda_acc);
  w.lambda_csd = c.get("lambda_csd", w.lambda_csd);
  w.lambda_adv = c.get("lambda_adv", w.lambda_adv);
  w.csd_margin = c.get("csd_margin", w.csd_margin);
  return w;
}

cosyn::DimensionPlan dims_from(const cosyn::KeyValueConfig& c) {
  cosyn::DimensionPlan d;
  if (c.get("dims", std::string("full")) == "miniature") d = cosyn::DimensionPlan::miniature();
  d.d_audio = c.get("d_audio", d.d_audio);
  d.d_text = c.get("d_text", d.d_text);
  d.d_speaker = c.get("d_speaker", d.d_speaker);
  d.d_face_feat = c.get("d_face_feat", d.d_face_feat);
  d.d_face_comp = c.get("d_face_comp", d.d_face_comp);
  d.d_face_latent = c.get("d_face_latent", d.d_face_latent);
  d.d_pose_feat = c.get("d_pose_feat", d.d_pose_feat);
  d.d_pose_comp = c.get("d_pose_comp", d.d_pose_comp);
  d.d_pose_latent = c.get("d_pose_latent", d.d_pose_latent);
  return d;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Co-speech face and upper-body motion synthesis"};
  app.require_subcommand(1);

  std::string config_path, out, data, corpus, checkpoint, audio, transcript, phoneme_dir;
  uint64_t seed = 4;
  int speaker = 0;
  bool resume = false, no_disc = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key=value configuration file");
    sub->add_option("--seed", seed, "random seed");
    sub->add_option("--out", out, "output directory or file")->required();
  };

  auto* gen_synth = app.add_subcommand("gen-synthetic", "write a procedural clip corpus");
  add_common(gen_synth);

  auto* preprocess = app.add_subcommand("preprocess", "raw clips -> windowed tensors");
  add_common(preprocess);
  preprocess->add_option("--corpus", corpus, "raw corpus root")->required();

  auto* train = app.add_subcommand("train", "adversarial generator training");
  add_common(train);
  train->add_option("--data", data, "processed corpus dir")->required();
  train->add_flag("--resume", resume, "continue from the saved training state");
  train->add_flag("--no-discriminator", no_disc, "reconstruction-only ablation");

  auto* train_ph = app.add_subcommand("train-phoneme", "audio -> lip shape predictor");
  add_common(train_ph);
  train_ph->add_option("--data", data, "processed corpus dir")->required();

  auto* synth = app.add_subcommand("synthesize", "audio + transcript -> animation JSON");
  add_common(synth);
  synth->add_option("--data", data, "processed corpus dir")->required();
  synth->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  synth->add_option("--audio", audio, "input wav")->required();
  synth->add_option("--transcript", transcript, "input transcript tsv");
  synth->add_option("--speaker", speaker, "speaker id");
  synth->add_option("--phoneme", phoneme_dir, "phoneme model dir (enables lip superposition)");

  auto* evaluate = app.add_subcommand("evaluate", "test-split metric report");
  add_common(evaluate);
  evaluate->add_option("--data", data, "processed corpus dir")->required();
  evaluate->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    const cosyn::KeyValueConfig cfg = load_config(config_path);

    if (gen_synth->parsed()) {
      cosyn::SyntheticCorpusSpec spec;
      spec.speakers = cfg.get("speakers", spec.speakers);
      spec.clips_per_speaker = cfg.get("clips_per_speaker", spec.clips_per_speaker);
      spec.clip_frames = cfg.get("clip_frames", spec.clip_frames);
      spec.noise_level = cfg.get("noise_level", spec.noise_level);
      spec.coupling = cfg.get("coupling", spec.coupling);
      spec.signature_gap = cfg.get("signature_gap", spec.signature_gap);
      cosyn::generate_synthetic_corpus(spec, out, seed);
      std::cout << "wrote " << spec.speakers * spec.clips_per_speaker << " clips to " << out << '\n';
    } else if (preprocess->parsed()) {
      cosyn::PreprocessOptions opts;
      opts.stride = cfg.get("stride", opts.stride);
      opts.anchor_rate = cfg.get("anchor_rate", opts.anchor_rate);
      auto res = cosyn::cmd_preprocess(corpus, out, opts, &std::cerr);
      std::cout << "preprocessed " << res.clips_total - res.clips_skipped << "/" << res.clips_total
                << " clips; windows:";
      for (const auto& [split, n] : res.window_counts) std::cout << ' ' << split << '=' << n;
      std::cout << '\n';
      if (!res.ok()) {
        std::cerr << "preprocess: more than 10% of clips were skipped\n";
        return kExitValidation;
      }
    } else if (train->parsed()) {
      cosyn::TrainOptions opts;
      opts.opt = optimizer_from(cfg);
      opts.weights = weights_from(cfg);
      opts.dims = dims_from(cfg);
      opts.seed = seed;
      opts.use_discriminator = !no_disc && cfg.get("use_discriminator", 1) != 0;
      opts.eval_every = cfg.get("eval_every", opts.eval_every);
      opts.resume = resume;
      auto res = cosyn::cmd_train(data, out, opts, &std::cout);
      std::cout << "trained " << res.epochs_run << " epochs, final loss " << res.final_loss
                << ", best val " << res.best_val << '\n';
    } else if (train_ph->parsed()) {
      auto res = cosyn::cmd_train_phoneme(data, out, optimizer_from(cfg), seed,
                                          cfg.get("phoneme_hidden", 32), &std::cout);
      std::cout << "phoneme model: best epoch " << res.best_epoch << ", val loss " << res.val_loss
                << '\n';
    } else if (synth->parsed()) {
      cosyn::SynthesizeOptions opts;
      opts.speaker = speaker;
      opts.seed = seed;
      if (!phoneme_dir.empty()) opts.phoneme_dir = phoneme_dir;
      const int frames = cosyn::cmd_synthesize(data, checkpoint, audio, transcript, out, opts);
      std::cout << "synthesized " << frames << " frames to " << out << '\n';
    } else if (evaluate->parsed()) {
      cosyn::EvaluateOptions opts;
      opts.seed = seed;
      opts.ae_epochs = cfg.get("ae_epochs", opts.ae_epochs);
      opts.ae_feature_dim = cfg.get("ae_feature_dim", opts.ae_feature_dim);
      opts.ae_hidden = cfg.get("ae_hidden", opts.ae_hidden);
      auto report = cosyn::cmd_evaluate(data, checkpoint, out, opts, &std::cout);
      std::cout << cosyn::report_to_csv(report);
    }
  } catch (const cosyn::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const cosyn::Error& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}
