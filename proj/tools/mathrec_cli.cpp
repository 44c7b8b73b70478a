// Command-line front end: segment, gen, train, predict, evaluate, inspect-attention.

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>

#include "CLI11.hpp"
#include "mathrec/attention_export.hpp"
#include "mathrec/checkpoint.hpp"
#include "mathrec/dataset.hpp"
#include "mathrec/metrics.hpp"
#include "mathrec/train.hpp"

namespace fs = std::filesystem;
using namespace mathrec;

namespace {

// Relative output paths land under $MATHREC_OUTPUT_ROOT when it is set.
fs::path output_path(const fs::path& p) {
  const char* root = std::getenv("MATHREC_OUTPUT_ROOT");
  if (!root || !*root || p.is_absolute()) return p;
  return fs::path(root) / p;
}

struct SegmentArgs {
  std::string image, out;
  int threshold = 160, connectivity = 8, min_area = 2;
  std::string resampling = "nearest";
};

SegmentationConfig seg_config(int threshold, int connectivity, int min_area, const std::string& resampling) {
  SegmentationConfig c;
  c.threshold = threshold;
  c.connectivity = connectivity;
  c.min_component_area = min_area;
  if (resampling == "nearest")
    c.resampling = Resampling::Nearest;
  else if (resampling == "bilinear")
    c.resampling = Resampling::Bilinear;
  else
    throw InputError("resampling must be nearest or bilinear");
  c.validate();
  return c;
}

struct GenArgs {
  std::string out;
  std::size_t count = 100, valid = 0, test = 0, max_tokens = 24;
  int max_depth = 2;
  std::uint64_t seed = 1;
  bool no_halo = false;
};

struct TrainArgs {
  std::string manifest, out, variant = "pc", precision = "float";
  int embed_dim = 64, encoder_layers = 2, decoder_layers = 2, heads = 4;
  int epochs = 100, batch_size = 8;
  double lr = 3e-4;
  std::uint64_t seed = 1;
  std::vector<int> thresholds{160, 180, 200};
  int eval_threshold = 160;
  bool no_schedule = false;
};

struct PredictArgs {
  std::string checkpoint, manifest, split = "test", out, vocab;
  std::vector<std::string> images;
  int threshold = 160, beam_width = 1, max_length = 0;
};

struct EvaluateArgs {
  std::string predictions, manifest, split = "test", out;
  std::string render_command;
};

struct InspectArgs {
  std::string checkpoint, image, out;
  int threshold = 160;
  bool no_overlays = false;
};

void run_segment(const SegmentArgs& a) {
  const auto seg = segment(read_png(a.image), seg_config(a.threshold, a.connectivity, a.min_area, a.resampling));
  write_segmentation_debug(output_path(a.out), seg);
  std::cout << seg.size() << " blocks written to " << output_path(a.out).string() << '\n';
}

void run_gen(const GenArgs& a) {
  SyntheticOptions opt;
  opt.count = a.count;
  opt.valid_count = a.valid;
  opt.test_count = a.test;
  opt.max_depth = a.max_depth;
  opt.seed = a.seed;
  opt.max_tokens = a.max_tokens;
  RenderStyle style;
  style.halo = !a.no_halo;
  const auto items = generate_synthetic(opt, GlyphAtlas::standard(), style);
  const auto dir = output_path(a.out);
  write_synthetic(items, dir);
  std::cout << items.size() << " expressions written to " << (dir / "manifest.tsv").string() << '\n';
}

std::uint32_t checkpoint_scalar_bytes(const fs::path& p) { return read_checkpoint_file(p).scalar_bytes; }

template <typename Scalar>
void train_with(const TrainArgs& a) {
  const auto manifest = ingest(a.manifest);
  const auto train_images = load_images(manifest, Split::Train);
  const auto valid_images = load_images(manifest, Split::Valid);
  std::vector<std::vector<Token>> corpus;
  std::size_t longest = 0;
  for (const auto& img : train_images) {
    corpus.push_back(img.target);
    longest = std::max(longest, img.target.size() + 1);
  }
  const Vocabulary vocab = build_vocabulary(corpus);

  AugmentationPlan plan;
  plan.thresholds = a.thresholds;
  plan.eval_threshold = a.eval_threshold;
  const auto train_aug = augment_training(train_images, plan);
  const auto valid_aug = prepare_evaluation(valid_images, plan);
  for (const auto& w : train_aug.warnings) std::cerr << "warning: " << w << '\n';
  for (const auto& w : valid_aug.warnings) std::cerr << "warning: " << w << '\n';

  model::ModelConfig base;
  base.embed_dim = a.embed_dim;
  base.encoder_layers = a.encoder_layers;
  base.decoder_layers = a.decoder_layers;
  base.heads = a.heads;
  base.seed = a.seed;
  base.vocab_size = static_cast<int>(vocab.size());
  model::Model<Scalar> net(model::ModelConfig::variant(a.variant, base));

  TrainConfig tc;
  tc.max_epochs = a.epochs;
  tc.batch_size = a.batch_size;
  tc.learning_rate = a.lr;
  tc.seed = a.seed;
  tc.use_schedule = !a.no_schedule;
  tc.output_dir = output_path(a.out);
  tc.metadata = {{"variant", a.variant},
                 {"max_decode_length", static_cast<int>(std::ceil(1.5 * static_cast<double>(longest)))},
                 {"eval_threshold", a.eval_threshold}};
  fs::create_directories(tc.output_dir);
  vocab.save(tc.output_dir / "vocab.txt");

  const auto result = train(net, vocab, encode_samples<Scalar>(train_aug.samples, vocab),
                            encode_samples<Scalar>(valid_aug.samples, vocab), tc, [](const EpochLog& e) {
                              std::cout << "epoch " << e.epoch << " train " << e.train_loss << " valid " << e.valid_loss
                                        << " lr " << e.learning_rate << (e.event.halved ? " halved" : "")
                                        << (e.event.stop ? " stop" : "") << '\n';
                            });
  std::cout << "best epoch " << result.best_epoch << " valid " << result.best_valid_loss << "; checkpoint "
            << (tc.output_dir / "best.ckpt").string() << '\n';
}

template <typename Scalar>
void predict_with(const PredictArgs& a) {
  std::optional<Vocabulary> expected;
  if (!a.vocab.empty()) expected = Vocabulary::load(a.vocab);
  auto ck = load_checkpoint<Scalar>(a.checkpoint, expected ? &*expected : nullptr);
  model::DecodeConfig dc;
  dc.strategy = a.beam_width > 1 ? model::DecodeStrategy::Beam : model::DecodeStrategy::Greedy;
  dc.beam_width = std::max(1, a.beam_width);
  dc.max_length = a.max_length > 0 ? a.max_length : ck.extra.value("max_decode_length", 64);
  SegmentationConfig sc;
  sc.threshold = a.threshold;
  sc.validate();

  std::vector<std::pair<std::string, fs::path>> inputs;
  if (!a.manifest.empty()) {
    const auto m = ingest(a.manifest);
    for (const auto& r : m.split(parse_split(a.split))) inputs.emplace_back(r.image.stem().string(), m.resolve(r));
  }
  for (const auto& img : a.images) inputs.emplace_back(fs::path(img).stem().string(), img);
  if (inputs.empty()) throw InputError("no images given (use --manifest or --image)");

  std::vector<Prediction> preds;
  for (const auto& [id, path] : inputs) {
    preds.push_back(predict_image(ck.model, ck.vocabulary, id, read_png(path), sc, dc));
    if (preds.back().empty_expression) std::cerr << "warning: " << id << ": no symbols found\n";
    if (preds.back().truncated) std::cerr << "warning: " << id << ": output truncated at " << dc.max_length << '\n';
  }
  const auto out = output_path(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_predictions(out, preds);
  std::cout << preds.size() << " predictions written to " << out.string() << '\n';
}

void run_evaluate(const EvaluateArgs& a) {
  const auto m = ingest(a.manifest, false);
  std::map<std::string, std::string> gold;
  for (const auto& r : m.split(parse_split(a.split))) gold[r.image.stem().string()] = r.latex;
  std::vector<EvalItem> items;
  for (const auto& line : read_predictions(a.predictions)) {
    auto it = gold.find(line.image_id);
    if (it == gold.end()) throw PairingError("prediction for unknown image '" + line.image_id + "'");
    EvalItem item;
    item.image_id = line.image_id;
    item.gold = tokenize(it->second);
    try {
      item.pred = tokenize(line.latex);
    } catch (const ParseError&) {
      item.pred_failed = true;
    }
    items.push_back(std::move(item));
  }
  std::unique_ptr<Renderer> renderer;
  const auto dir = output_path(a.out);
  if (a.render_command.empty())
    renderer = std::make_unique<GlyphRenderer>();
  else
    renderer = std::make_unique<ExternalCommandRenderer>(a.render_command, dir / "render_scratch");
  const auto report = evaluate_corpus(items, *renderer);
  fs::create_directories(dir);
  write_report(report, dir / "summary.tsv", dir / "diagnostics.jsonl");
  std::cout << "match\t" << report.match << "\nmatch_ws\t" << report.match_ws << "\nbleu4\t" << report.bleu4
            << "\nrouge4\t" << report.rouge4 << '\n';
}

template <typename Scalar>
void inspect_with(const InspectArgs& a) {
  auto ck = load_checkpoint<Scalar>(a.checkpoint);
  SegmentationConfig sc;
  sc.threshold = a.threshold;
  const GrayImage image = read_png(a.image);
  const auto seg = segment(image, sc);
  const auto input = model::make_input<Scalar>(seg);
  model::EncoderTrace<Scalar> trace;
  const auto encoded = ck.model.encoded(input, &trace);
  const auto dir = output_path(a.out);

  std::vector<std::vector<AttentionMatrix>> maps;
  for (const auto& layer : trace.layer_maps) {
    maps.emplace_back();
    for (const auto& head : layer) maps.back().push_back(head.template cast<double>());
  }
  export_encoder_attention(dir / "encoder", image, input.boxes, maps, !a.no_overlays);
  if (trace.position_table.size()) write_matrix_text(dir / "encoder" / "position_scores.txt", trace.position_table.template cast<double>());

  model::DecodeConfig dc;
  dc.max_length = ck.extra.value("max_decode_length", 64);
  auto decoded = ck.model.decode(encoded, dc);
  std::vector<TokenId> emitted = decoded.tokens;
  std::vector<std::string> texts;
  for (TokenId id : emitted) texts.push_back(ck.vocabulary.text(id));
  if (!decoded.truncated) {
    emitted.push_back(Vocabulary::kEosId);
    texts.push_back(kEos);
  }
  export_decoder_attention(dir / "decoder", image, input.boxes, texts, ck.model.decoder_attention(encoded, emitted),
                           !a.no_overlays);
  std::vector<Token> tokens;
  for (TokenId id : decoded.tokens) tokens.push_back(make_token(ck.vocabulary.text(id)));
  std::cout << "prediction\t" << detokenize(tokens) << "\nartifacts in " << dir.string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Printed mathematical expression recognition"};
  app.set_config("--config", "", "TOML file supplying any flag");
  app.require_subcommand(1);

  SegmentArgs seg;
  auto* c_seg = app.add_subcommand("segment", "Split an image into symbol blocks with position vectors");
  c_seg->add_option("--image", seg.image, "Input PNG")->required()->check(CLI::ExistingFile);
  c_seg->add_option("--out", seg.out, "Output directory")->required();
  c_seg->add_option("--threshold", seg.threshold)->check(CLI::Range(0, 255));
  c_seg->add_option("--connectivity", seg.connectivity)->check(CLI::IsMember({4, 8}));
  c_seg->add_option("--min-area", seg.min_area);
  c_seg->add_option("--resampling", seg.resampling)->check(CLI::IsMember({"nearest", "bilinear"}));

  GenArgs gen;
  auto* c_gen = app.add_subcommand("gen", "Render a synthetic expression corpus");
  c_gen->add_option("--out", gen.out, "Output directory")->required();
  c_gen->add_option("--count", gen.count);
  c_gen->add_option("--valid", gen.valid, "Number of validation records");
  c_gen->add_option("--test", gen.test, "Number of test records");
  c_gen->add_option("--max-depth", gen.max_depth);
  c_gen->add_option("--max-tokens", gen.max_tokens);
  c_gen->add_option("--seed", gen.seed);
  c_gen->add_flag("--no-halo", gen.no_halo, "Draw pure black on white");

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train a recognizer on a manifest");
  c_train->add_option("--manifest", tr.manifest)->required()->check(CLI::ExistingFile);
  c_train->add_option("--out", tr.out, "Run directory")->required();
  c_train->add_option("--variant", tr.variant)->check(CLI::IsMember({"pc", "self", "nopos"}));
  c_train->add_option("--precision", tr.precision)->check(CLI::IsMember({"float", "double"}));
  c_train->add_option("--embed-dim", tr.embed_dim);
  c_train->add_option("--encoder-layers", tr.encoder_layers);
  c_train->add_option("--decoder-layers", tr.decoder_layers);
  c_train->add_option("--heads", tr.heads);
  c_train->add_option("--epochs", tr.epochs);
  c_train->add_option("--batch-size", tr.batch_size);
  c_train->add_option("--lr", tr.lr);
  c_train->add_option("--seed", tr.seed);
  c_train->add_option("--thresholds", tr.thresholds, "Training segmentation thresholds")->delimiter(',');
  c_train->add_option("--eval-threshold", tr.eval_threshold);
  c_train->add_flag("--no-schedule", tr.no_schedule, "Keep the learning rate fixed and never stop early");

  PredictArgs pr;
  auto* c_pred = app.add_subcommand("predict", "Transcribe images with a checkpoint");
  c_pred->add_option("--checkpoint", pr.checkpoint)->required()->check(CLI::ExistingFile);
  c_pred->add_option("--manifest", pr.manifest)->check(CLI::ExistingFile);
  c_pred->add_option("--split", pr.split)->check(CLI::IsMember({"train", "valid", "test"}));
  c_pred->add_option("--image", pr.images, "Extra image(s) to transcribe");
  c_pred->add_option("--out", pr.out, "Predictions TSV")->required();
  c_pred->add_option("--vocab", pr.vocab, "Vocabulary the checkpoint must match")->check(CLI::ExistingFile);
  c_pred->add_option("--threshold", pr.threshold)->check(CLI::Range(0, 255));
  c_pred->add_option("--beam-width", pr.beam_width, "1 means greedy");
  c_pred->add_option("--max-length", pr.max_length, "Decoding steps including EOS; 0 uses the run default");

  EvaluateArgs ev;
  auto* c_eval = app.add_subcommand("evaluate", "Score predictions against a manifest");
  c_eval->add_option("--predictions", ev.predictions)->required()->check(CLI::ExistingFile);
  c_eval->add_option("--manifest", ev.manifest)->required()->check(CLI::ExistingFile);
  c_eval->add_option("--split", ev.split)->check(CLI::IsMember({"train", "valid", "test"}));
  c_eval->add_option("--out", ev.out, "Report directory")->required();
  c_eval->add_option("--render-command", ev.render_command,
                     "Shell template with {latex} and {png}; default is the built-in glyph renderer");

  InspectArgs in;
  auto* c_insp = app.add_subcommand("inspect-attention", "Export encoder and decoder attention for one image");
  c_insp->add_option("--checkpoint", in.checkpoint)->required()->check(CLI::ExistingFile);
  c_insp->add_option("--image", in.image)->required()->check(CLI::ExistingFile);
  c_insp->add_option("--out", in.out)->required();
  c_insp->add_option("--threshold", in.threshold)->check(CLI::Range(0, 255));
  c_insp->add_flag("--no-overlays", in.no_overlays, "Skip PNG overlays");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: usage: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*c_seg) {
      run_segment(seg);
    } else if (*c_gen) {
      run_gen(gen);
    } else if (*c_train) {
      if (tr.precision == "double")
        train_with<double>(tr);
      else
        train_with<float>(tr);
    } else if (*c_pred) {
      if (checkpoint_scalar_bytes(pr.checkpoint) == 8)
        predict_with<double>(pr);
      else
        predict_with<float>(pr);
    } else if (*c_eval) {
      run_evaluate(ev);
    } else if (*c_insp) {
      if (checkpoint_scalar_bytes(in.checkpoint) == 8)
        inspect_with<double>(in);
      else
        inspect_with<float>(in);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.kind() << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
