#include "objnav/objectives/losses.hpp"

#include <map>

#include "objnav/common/errors.hpp"
#include "objnav/common/rng.hpp"

namespace objnav::objectives {

using ad::Graph;
using ad::Index;
using ad::Matrix;
using ad::Var;

void validate(const AnnotationSet& annotations) {
  if (annotations.empty()) throw ContractError("annotation set is empty");
  for (const Annotation& a : annotations) {
    const Box<double>& b = a.box;
    const bool inside = b.x1 >= 0.0 && b.y1 >= 0.0 && b.x2 <= 1.0 && b.y2 <= 1.0;
    if (!inside || b.x1 > b.x2 || b.y1 > b.y2) throw ContractError("invalid box for '" + a.caption + "'");
  }
}

Matrix pairwise_cost(const Matrix& boxes, const AnnotationSet& annotations, MatchingCost mode) {
  if (boxes.cols() != 4) throw ContractError("pairwise_cost: boxes must be K x 4");
  if (boxes.rows() < 1 || annotations.empty()) throw ContractError("pairwise_cost: need K >= 1 and N >= 1");
  Matrix cost(boxes.rows(), static_cast<Index>(annotations.size()));
  for (Index i = 0; i < boxes.rows(); ++i) {
    const Box<double> pred{boxes(i, 0), boxes(i, 1), boxes(i, 2), boxes(i, 3)};
    for (Index j = 0; j < cost.cols(); ++j) {
      const Box<double>& gt = annotations[static_cast<std::size_t>(j)].box;
      const double overlap = giou(pred, gt);
      cost(i, j) = l1_box(pred, gt) + (mode == MatchingCost::kOneMinusGiou ? 1.0 - overlap : overlap);
    }
  }
  return cost;
}

namespace {

// Mean cross-entropy of row-wise softmax(logits) against one target column per row.
Var cross_entropy(Var logits, std::vector<Index> targets) {
  return -1.0 * ad::mean(ad::gather_elements(ad::log_softmax_rows(logits), std::move(targets)));
}

}  // namespace

Var contrastive_loss(Graph&, Var image_embeddings, Var text_embeddings, double tau) {
  const Index batch = image_embeddings.rows();
  if (batch == 0) throw ContractError("contrastive_loss: empty batch");
  if (text_embeddings.rows() != batch || text_embeddings.cols() != image_embeddings.cols()) {
    throw ContractError("contrastive_loss: image and text batches differ in shape");
  }
  if (!(tau > 0.0)) throw ContractError("contrastive_loss: tau must be positive");
  std::vector<Index> diagonal(static_cast<std::size_t>(batch));
  for (Index i = 0; i < batch; ++i) diagonal[static_cast<std::size_t>(i)] = i;
  Var logits = (1.0 / tau) * ad::matmul(image_embeddings, ad::transpose(text_embeddings));
  Var image_to_text = cross_entropy(logits, diagonal);
  Var text_to_image = cross_entropy(ad::transpose(logits), diagonal);
  return 0.5 * (image_to_text + text_to_image);
}

std::string concat_captions(std::vector<std::string> captions, std::uint64_t seed) {
  if (captions.empty()) throw ContractError("concat_captions: no captions");
  Rng rng(seed);
  rng.shuffle(captions);
  std::string out = captions.front();
  for (std::size_t i = 1; i < captions.size(); ++i) out += ". " + captions[i];
  return out;
}

Var l1_box_rows(Graph&, Var pred, Var target) { return ad::sum_rows(ad::abs(pred - target)); }

Var giou_rows(Graph& g, Var pred, Var target) {
  auto col = [](Var v, Index c) { return ad::slice_cols(v, c, 1); };
  Var zeros = g.constant(Matrix::Zero(pred.rows(), 1));
  Var ax1 = col(pred, 0), ay1 = col(pred, 1), ax2 = col(pred, 2), ay2 = col(pred, 3);
  Var bx1 = col(target, 0), by1 = col(target, 1), bx2 = col(target, 2), by2 = col(target, 3);

  Var inter_w = ad::max(ad::min(ax2, bx2) - ad::max(ax1, bx1), zeros);
  Var inter_h = ad::max(ad::min(ay2, by2) - ad::max(ay1, by1), zeros);
  Var inter = inter_w * inter_h;
  Var uni = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter;
  Var hull = (ad::max(ax2, bx2) - ad::min(ax1, bx1)) * (ad::max(ay2, by2) - ad::min(ay1, by1));
  return inter / uni - (hull - uni) / hull;
}

MultilabelResult multilabel_contrastive_loss(Graph& g, const std::vector<SlotMatches>& matches,
                                             const Matrix& batch_texts, const ad::ParameterStore& params,
                                             const encoder::EncoderConfig& config, double tau) {
  if (!(tau > 0.0)) throw ContractError("multilabel_contrastive_loss: tau must be positive");
  std::vector<Var> rows;
  std::vector<Index> targets;
  for (const SlotMatches& m : matches) {
    if (m.assignment.pairs.empty()) continue;
    std::vector<Index> slot_ids;
    for (const auto& [slot, ann] : m.assignment.pairs) {
      if (slot < 0 || slot >= m.slots.rows()) throw ContractError("assignment references a missing slot");
      if (ann < 0 || static_cast<std::size_t>(ann) >= m.text_row.size()) {
        throw ContractError("assignment references a missing annotation");
      }
      slot_ids.push_back(slot);
      targets.push_back(m.text_row[static_cast<std::size_t>(ann)]);
    }
    Var projected = encoder::project_slots(g, m.slots, params, config);
    rows.push_back(ad::normalize_rows(ad::gather_rows(projected, std::move(slot_ids))));
  }
  if (rows.empty()) return {g.constant(Matrix::Zero(1, 1)), true};
  for (Index t : targets) {
    if (t < 0 || t >= batch_texts.rows()) throw ContractError("annotation text row out of range");
  }

  Var slots = ad::concat_rows(rows);
  Var logits = (1.0 / tau) * ad::matmul(slots, g.constant(batch_texts.transpose()));
  return {cross_entropy(logits, std::move(targets)), false};
}

std::unique_ptr<LossGraph> build_total_loss(const std::vector<TrainingExample>& batch,
                                            const ad::ParameterStore& params,
                                            const encoder::EncoderConfig& config, const LossOptions& options,
                                            encoder::TextCache& texts) {
  if (batch.empty()) throw ContractError("total_loss: empty batch");
  auto out = std::make_unique<LossGraph>();
  Graph& g = out->graph;
  const LossWeights& w = options.weights;

  // Annotation captions of the whole batch, deduplicated in order of appearance.
  std::vector<std::string> captions;
  std::map<std::string, Index> caption_row;
  for (const TrainingExample& ex : batch) {
    validate(ex.annotations);
    for (const Annotation& a : ex.annotations) {
      if (caption_row.emplace(a.caption, static_cast<Index>(captions.size())).second) captions.push_back(a.caption);
    }
  }
  Matrix caption_embeddings(static_cast<Index>(captions.size()), config.dim);
  for (std::size_t c = 0; c < captions.size(); ++c) caption_embeddings.row(static_cast<Index>(c)) = texts(captions[c]);

  std::vector<Var> image_embeddings;
  Matrix concat_embeddings(static_cast<Index>(batch.size()), config.dim);
  std::vector<Var> matched_pred;
  std::vector<Matrix> matched_target;
  std::vector<SlotMatches> slot_matches;

  for (std::size_t b = 0; b < batch.size(); ++b) {
    const TrainingExample& ex = batch[b];
    const encoder::PatchFeatures feats = encoder::encode_image(g, ex.image, params, config);
    const encoder::SlotTrace trace =
        encoder::run_slot_attention(g, feats, params, config, derive_seed(options.seed, 2 * b));
    Var boxes = encoder::predict_boxes(g, trace.final, params, config);
    image_embeddings.push_back(encoder::aggregate_embedding(g, feats, trace.final, params, config));

    Assignment assignment = hungarian(pairwise_cost(boxes.value(), ex.annotations, options.matching));
    std::vector<Index> slot_ids;
    Matrix target(static_cast<Index>(assignment.pairs.size()), 4);
    for (std::size_t p = 0; p < assignment.pairs.size(); ++p) {
      const auto [slot, ann] = assignment.pairs[p];
      const Box<double>& gt = ex.annotations[static_cast<std::size_t>(ann)].box;
      target.row(static_cast<Index>(p)) << gt.x1, gt.y1, gt.x2, gt.y2;
      slot_ids.push_back(slot);
    }
    if (!slot_ids.empty()) {
      matched_pred.push_back(ad::gather_rows(boxes, slot_ids));
      matched_target.push_back(std::move(target));
    }

    std::vector<std::string> image_captions;
    std::vector<Index> rows;
    for (const Annotation& a : ex.annotations) {
      image_captions.push_back(a.caption);
      rows.push_back(caption_row.at(a.caption));
    }
    concat_embeddings.row(static_cast<Index>(b)) =
        texts(concat_captions(std::move(image_captions), derive_seed(options.seed, 2 * b + 1)));

    slot_matches.push_back({trace.final.slots, assignment, std::move(rows)});
    out->assignments.push_back(std::move(assignment));
    out->boxes.push_back(boxes.value());
  }

  out->contrastive = contrastive_loss(g, ad::concat_rows(image_embeddings), g.constant(concat_embeddings), w.tau);

  Index matched_rows = 0;
  for (const Matrix& t : matched_target) matched_rows += t.rows();
  Matrix targets(matched_rows, 4);
  Index r = 0;
  for (const Matrix& t : matched_target) {
    targets.middleRows(r, t.rows()) = t;
    r += t.rows();
  }
  Var pred = ad::concat_rows(matched_pred);
  Var target = g.constant(targets);
  out->l1 = ad::mean(l1_box_rows(g, pred, target));
  out->giou = ad::mean(1.0 - giou_rows(g, pred, target));

  const MultilabelResult mc =
      multilabel_contrastive_loss(g, slot_matches, caption_embeddings, params, config, w.tau);
  out->multilabel = mc.loss;

  out->total = (w.alpha * out->contrastive) + (w.beta * out->l1) + (w.gamma * out->giou) + (w.delta * out->multilabel);
  g.mark_output("loss.contrastive", out->contrastive);
  g.mark_output("loss.l1", out->l1);
  g.mark_output("loss.giou", out->giou);
  g.mark_output("loss.multilabel", out->multilabel);
  g.mark_output("loss.total", out->total);

  out->report = {out->contrastive.scalar(), out->l1.scalar(), out->giou.scalar(), out->multilabel.scalar(),
                 out->total.scalar(),       mc.empty};
  return out;
}

LossReport total_loss(const std::vector<TrainingExample>& batch, const ad::ParameterStore& params,
                      const encoder::EncoderConfig& config, const LossOptions& options, encoder::TextCache& texts) {
  return build_total_loss(batch, params, config, options, texts)->report;
}

}  // namespace objnav::objectives
