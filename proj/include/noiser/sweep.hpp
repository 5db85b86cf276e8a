#pragma once

#include <string>

#include "noiser/config.hpp"
#include "noiser/eval.hpp"
#include "noiser/pipeline.hpp"

namespace noiser {

// Builds the orthographic-ratio testbed family for ratio_sweep: ratio 0 is
// the golden-only scenario, positive ratios surround the golden document with
// orthographic copies at that ratio; the overlay adds illegal sentence
// documents on top.
inline SweepBuilder make_sweep_builder(TestbedConfig base, ClientBundle& clients,
                                       int on_docs = 4, int isn_docs = 4) {
  return [base, &clients, on_docs, isn_docs](double ratio, bool with_isn) {
    TestbedConfig cfg = base;
    cfg.ortho_ratio = ratio;
    cfg.ortho_actions = {OrthoAction::insert, OrthoAction::erase, OrthoAction::substitute};

    ScenarioSpec s;
    s.include_golden = true;
    s.golden_position = GoldenPosition::middle();
    char tag[32];
    std::snprintf(tag, sizeof(tag), "ON %.2g", ratio);
    s.name = tag;
    if (ratio > 0.0) s.noise_kinds.push_back({NoiseKind::orthographic, on_docs});
    if (with_isn) {
      s.name += " + ISN";
      s.noise_kinds.push_back({NoiseKind::illegal_sentence, isn_docs});
    }
    s.total_docs = 1;
    for (const auto& kc : s.noise_kinds) s.total_docs += kc.count;
    cfg.scenarios = {s};

    char sub[64];
    std::snprintf(sub, sizeof(sub), "sweep_r%.2g%s", ratio, with_isn ? "_isn" : "");
    cfg.out_dir = base.out_dir + "/" + sub;
    return build_testbed(cfg, clients).items;
  };
}

}  // namespace noiser
