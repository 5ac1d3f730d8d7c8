#include "granenc/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

#include "granenc/embedding.hpp"
#include "granenc/encoder.hpp"
#include "granenc/mrc_head.hpp"
#include "granenc/slu_head.hpp"

namespace granenc {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

const GradcheckEntry* GradcheckReport::first_failure() const {
  for (const auto& e : entries)
    if (!e.pass) return &e;
  return nullptr;
}

std::string GradcheckReport::to_string() const {
  std::ostringstream out;
  out << selector << ": " << (pass ? "PASS" : "FAIL") << '\n';
  for (const auto& e : entries) {
    out << "  " << (e.pass ? "ok  " : "FAIL") << ' ' << e.name << " max_rel_err=" << e.max_rel_error
        << " max_abs_err=" << e.max_abs_error << " n=" << e.checked << '\n';
  }
  return out.str();
}

GradcheckReport gradcheck_function(const std::string& selector, const std::vector<Parameter*>& params,
                                   const GradcheckForward& forward, const GradcheckOptions& options) {
  Rng rng(options.seed ^ 0x5eedULL);
  std::vector<Tensor> probes;

  auto evaluate = [&](bool with_backward) {
    ag::Graph g;
    std::vector<ag::Var> outs = forward(g);
    if (probes.empty()) {
      for (const ag::Var& o : outs) {
        Tensor r(o.value().shape());
        for (double& v : r.values()) v = rng.uniform(-1.0, 1.0);
        probes.push_back(std::move(r));
      }
    }
    std::vector<ag::Var> terms;
    for (std::size_t k = 0; k < outs.size(); ++k) terms.push_back(ag::sum(ag::mul(outs[k], g.constant(probes[k]))));
    ag::Var loss = ag::sum(ag::concat_rows(terms));
    if (with_backward) g.backward(loss);
    return loss.value()[0];
  };

  for (Parameter* p : params) p->zero_grad();
  evaluate(true);
  std::vector<Tensor> analytic;
  for (Parameter* p : params) analytic.push_back(p->grad);
  if (options.corrupt) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params[i]->name == *options.corrupt && analytic[i].size() > 0) {
        analytic[i][0] += 1e-2 * (1.0 + std::abs(analytic[i][0]));
      }
    }
  }

  GradcheckReport report{selector, {}, true};
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    GradcheckEntry entry{p.name};
    const std::size_t cols = p.value.rank() >= 2 ? p.value.cols() : p.value.size();
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      if (p.frozen_row && j / cols == *p.frozen_row) continue;
      const double saved = p.value[j];
      p.value[j] = saved + options.epsilon;
      const double plus = evaluate(false);
      p.value[j] = saved - options.epsilon;
      const double minus = evaluate(false);
      p.value[j] = saved;
      const double numeric = (plus - minus) / (2.0 * options.epsilon);
      const double a = analytic[i][j];
      entry.max_rel_error = std::max(entry.max_rel_error, relative_error(a, numeric));
      entry.max_abs_error = std::max(entry.max_abs_error, std::abs(a - numeric));
      ++entry.checked;
    }
    entry.pass = entry.max_rel_error < options.tolerance;
    report.pass = report.pass && entry.pass;
    report.entries.push_back(std::move(entry));
  }
  for (Parameter* p : params) p->zero_grad();
  return report;
}

const std::vector<std::string>& gradcheck_selectors() {
  static const std::vector<std::string> names = {"char_cnn",      "bilstm",         "self_attention",
                                                 "encoder",       "attention_flow", "span_output",
                                                 "intent_decoder", "slot_decoder",  "mrc_head"};
  return names;
}

namespace {

Parameter random_input(const std::string& name, std::size_t rows, std::size_t cols, Rng& rng) {
  Parameter p(name, Tensor({rows, cols}));
  p.init_uniform(rng, -1.0, 1.0);
  return p;
}

template <typename Module>
std::vector<Parameter*> with_inputs(Module& m, std::vector<Parameter*> inputs) {
  std::vector<Parameter*> out = m.parameters();
  out.insert(out.end(), inputs.begin(), inputs.end());
  return out;
}

// Recurrent weights start small; widen them so the check sees non-trivial curvature.
void widen(const std::vector<Parameter*>& params, Rng& rng) {
  for (Parameter* p : params) p->init_uniform(rng, -0.5, 0.5);
}

}  // namespace

GradcheckReport gradcheck(const std::string& selector, const GradcheckOptions& options) {
  Rng rng(options.seed);
  const std::size_t t = std::max<std::size_t>(options.instance_size, 1);

  if (selector == "char_cnn") {
    CharCnn cnn(8, 3, 2, 4, rng);
    widen(cnn.parameters(), rng);
    std::vector<std::vector<std::int64_t>> words;
    for (std::size_t w = 0; w < t; ++w) {
      std::vector<std::int64_t> ids;
      for (std::size_t c = 0; c < 1 + w % 4; ++c) ids.push_back(2 + static_cast<std::int64_t>(rng.below(6)));
      words.push_back(ids);
    }
    return gradcheck_function(selector, cnn.parameters(),
                              [&](ag::Graph& g) { return std::vector<ag::Var>{cnn.forward(g, words)}; }, options);
  }
  if (selector == "bilstm") {
    BiLstm lstm("bilstm", 3, 3, rng);
    widen(lstm.parameters(), rng);
    Parameter x = random_input("input.x", t, 3, rng);
    return gradcheck_function(selector, with_inputs(lstm, {&x}), [&](ag::Graph& g) {
      auto out = lstm.forward(g, g.param(x));
      return std::vector<ag::Var>{out.states, out.summary};
    }, options);
  }
  if (selector == "self_attention") {
    SelfAttention attn("attention", 4, 3, rng);
    widen(attn.parameters(), rng);
    Parameter x = random_input("input.x", t, 4, rng);
    return gradcheck_function(selector, with_inputs(attn, {&x}), [&](ag::Graph& g) {
      return std::vector<ag::Var>{attn.forward(g, g.param(x))};
    }, options);
  }
  if (selector == "encoder") {
    SharedEncoder enc(4, 3, 3, rng);
    widen(enc.parameters(), rng);
    // Two batch rows of different true lengths.
    Parameter x0 = random_input("input.x0", t, 4, rng);
    Parameter x1 = random_input("input.x1", std::max<std::size_t>(t - 1, 1), 4, rng);
    return gradcheck_function(selector, with_inputs(enc, {&x0, &x1}), [&](ag::Graph& g) {
      std::vector<ag::Var> outs;
      for (Parameter* x : {&x0, &x1}) {
        EncodedSequence e = enc.forward(g, g.param(*x));
        outs.push_back(e.token_states);
        outs.push_back(e.summary);
      }
      return outs;
    }, options);
  }
  if (selector == "attention_flow") {
    AttentionFlow flow(3, rng);
    widen(flow.parameters(), rng);
    Parameter h = random_input("input.passage", t, 3, rng);
    Parameter u = random_input("input.question", std::max<std::size_t>(t - 1, 1), 3, rng);
    return gradcheck_function(selector, with_inputs(flow, {&h, &u}), [&](ag::Graph& g) {
      return std::vector<ag::Var>{flow.forward(g, g.param(h), g.param(u))};
    }, options);
  }
  if (selector == "span_output") {
    SpanOutput span(8, 4, 2, rng);
    widen(span.parameters(), rng);
    Parameter gflow = random_input("input.flow", t, 8, rng);
    Parameter m = random_input("input.modeling", t, 4, rng);
    return gradcheck_function(selector, with_inputs(span, {&gflow, &m}), [&](ag::Graph& g) {
      SpanLogits out = span.forward(g, g.param(gflow), g.param(m));
      return std::vector<ag::Var>{out.start, out.end};
    }, options);
  }
  if (selector == "intent_decoder") {
    IntentDecoder dec(4, 3, 3, rng);
    widen(dec.parameters(), rng);
    Parameter x = random_input("input.encoder_states", t, 4, rng);
    return gradcheck_function(selector, with_inputs(dec, {&x}), [&](ag::Graph& g) {
      return std::vector<ag::Var>{dec.forward(g, g.param(x))};
    }, options);
  }
  if (selector == "slot_decoder") {
    SlotDecoder dec(4, 3, 3, 5, rng);
    widen(dec.parameters(), rng);
    Parameter x = random_input("input.encoder_states", t, 4, rng);
    Parameter d = random_input("input.intent_logits", t, 3, rng);
    return gradcheck_function(selector, with_inputs(dec, {&x, &d}), [&](ag::Graph& g) {
      return std::vector<ag::Var>{dec.forward(g, g.param(x), ag::softmax_rows(g.param(d)))};
    }, options);
  }
  if (selector == "mrc_head") {
    MrcHead head(4, 2, rng);
    widen(head.parameters(), rng);
    Parameter p = random_input("input.passage", t, 4, rng);
    Parameter q = random_input("input.question", std::max<std::size_t>(t - 1, 1), 4, rng);
    return gradcheck_function(selector, with_inputs(head, {&p, &q}), [&](ag::Graph& g) {
      SpanLogits out = head.forward(g, g.param(p), g.param(q));
      return std::vector<ag::Var>{out.start, out.end};
    }, options);
  }
  throw ConfigError("unknown gradcheck selector \"" + selector + "\"");
}

}  // namespace granenc
