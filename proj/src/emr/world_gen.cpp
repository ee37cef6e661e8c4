#include <algorithm>
#include <cmath>
#include <cstdio>

#include "clinloop/emr/world.hpp"

namespace clinloop::emr {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double clamp(double v, double lo, double hi) {
  return v < lo ? lo : (v > hi ? hi : v);
}

std::string zero_pad(const char* prefix, int n, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%0*d", prefix, width, n);
  return buf;
}

// Reference value distributions per component; ranges are asymmetric so that
// abnormality is mostly a high-side exceedance (a monotone, learnable target).
struct ComponentSpec {
  const char* code;
  double mu;
  double sigma;
};

const ComponentSpec kComponentSpecs[] = {
    {"HCT", 40.0, 5.0}, {"HGB", 13.5, 1.8}, {"WBC", 7.5, 2.5},
    {"PLT", 250.0, 75.0}, {"ALB", 4.1, 0.5}, {"BUN", 16.0, 6.0},
    {"CA", 9.4, 0.5},   {"CO2", 24.0, 3.0}, {"CRE", 1.0, 0.35},
    {"K", 4.1, 0.45},   {"NA", 139.0, 3.0}, {"MG", 2.0, 0.25},
};

struct CodeParams {
  double alpha;  // base log-odds of presence
  double beta;   // severity coupling
};

Sex draw_sex(Rng& rng) {
  const double u = rng.u01();
  if (u < 0.530) return Sex::Female;
  if (u < 0.995) return Sex::Male;
  return Sex::Unknown;
}

Race draw_race(Rng& rng) {
  const double u = rng.u01();
  if (u < 0.515) return Race::White;
  if (u < 0.730) return Race::Other;
  if (u < 0.913) return Race::Asian;
  if (u < 0.955) return Race::Black;
  if (u < 0.984) return Race::Unknown;
  if (u < 0.997) return Race::PacificIslander;
  return Race::NativeAmerican;
}

}  // namespace

struct WorldBuilder {
  static std::unique_ptr<World> build(const WorldConfig& in_config) {
    WorldConfig config = in_config;
    if (!(config.history_start < config.history_end &&
          config.history_end <= config.sim_horizon)) {
      throw ValidationError("world horizons must be ordered");
    }
    config.validate();

    auto world = std::make_unique<World>(config);
    const std::uint64_t seed = config.seed;

    // Fixed per-world component models. Reference ranges sit asymmetrically
    // so abnormality is dominated by high-side exceedance, a monotone and
    // therefore learnable target.
    for (const auto& spec : kComponentSpecs) {
      ComponentModel cm;
      cm.mu = spec.mu;
      cm.sigma = spec.sigma;
      cm.beta = Rng::keyed(seed, "labbeta", spec.code).uniform(2.0, 2.6);
      cm.ref_low = std::round((spec.mu - 5.0 * spec.sigma) * 100.0) / 100.0;
      cm.ref_high = std::round((spec.mu + 1.1 * spec.sigma) * 100.0) / 100.0;
      world->components_[spec.code] = cm;
    }

    // Per-code presence parameters, fixed per world.
    std::vector<CodeParams> cond_params(config.condition_vocab_size);
    for (int k = 0; k < config.condition_vocab_size; ++k) {
      Rng r = Rng::keyed(seed, "condparam", k);
      cond_params[k] = {r.uniform(-4.5, -1.5), r.normal(0.7, 0.6)};
    }
    std::vector<CodeParams> med_params(config.medication_vocab_size);
    for (int k = 0; k < config.medication_vocab_size; ++k) {
      Rng r = Rng::keyed(seed, "medparam", k);
      med_params[k] = {r.uniform(-4.0, -1.5), r.normal(0.6, 0.5)};
    }

    const int n_units = std::max(1, config.n_patients / 20);

    world->patients_.reserve(config.n_patients);
    for (int i = 0; i < config.n_patients; ++i) {
      World::PatientData p;
      Rng demo = Rng::keyed(seed, "demo", i);
      p.record.patient_id = zero_pad("P", i + 1, 6);
      p.record.sex = draw_sex(demo);
      p.record.race = draw_race(demo);
      const double age_at_hist_start = demo.uniform(18.0, 92.0);
      Timestamp birth = config.history_start -
                        static_cast<Timestamp>(age_at_hist_start * 365.25 * kDay);
      p.record.birth_date = (birth / kDay) * kDay;
      p.record.unit_id =
          zero_pad("U", static_cast<int>(demo.index(n_units)) + 1, 3);
      p.severity = Rng::keyed(seed, "severity", i).normal();

      gen_conditions(*world, p, i, cond_params);
      gen_medications(*world, p, i, med_params);

      world->patient_index_[p.record.patient_id] =
          static_cast<int>(world->patients_.size());
      world->units_[p.record.unit_id].push_back(p.record.patient_id);
      world->patients_.push_back(std::move(p));
    }

    gen_encounters(*world);

    for (auto& p : world->patients_) {
      auto by_time = [](const CodeAt& a, const CodeAt& b) {
        return a.effective_time != b.effective_time
                   ? a.effective_time < b.effective_time
                   : a.code < b.code;
      };
      std::sort(p.conditions.begin(), p.conditions.end(), by_time);
      std::sort(p.medications.begin(), p.medications.end(), by_time);
    }
    return world;
  }

  static void gen_conditions(World& world, World::PatientData& p, int pidx,
                             const std::vector<CodeParams>& params) {
    const auto& cfg = world.config_;
    // Problem-list onsets may predate the history window.
    const Timestamp lo = cfg.history_start - days(3 * 365);
    const Timestamp hi = cfg.sim_horizon;
    for (int k = 0; k < static_cast<int>(params.size()); ++k) {
      Rng r = Rng::keyed(cfg.seed, "cond", pidx, k);
      const double p_base = sigmoid(params[k].alpha + params[k].beta * p.severity);
      if (r.u01() < p_base) {
        const Timestamp t = lo + static_cast<Timestamp>(r.u01() * (hi - lo));
        p.conditions.push_back({zero_pad("C", k + 1, 3), t});
      } else if (cfg.drift && cfg.drift->covariate_shift != 0.0) {
        // Drift can add onsets after start_time without disturbing any draw
        // made for the no-drift world.
        const double p_shift = sigmoid(params[k].alpha +
                                       params[k].beta * (p.severity +
                                                         cfg.drift->covariate_shift));
        const double p_extra = std::max(0.0, p_shift - p_base) / (1.0 - p_base);
        Rng rd = Rng::keyed(cfg.seed, "conddrift", pidx, k);
        if (rd.u01() < p_extra) {
          const Timestamp span = cfg.sim_horizon - cfg.drift->start_time;
          if (span > 0) {
            const Timestamp t =
                cfg.drift->start_time + static_cast<Timestamp>(rd.u01() * span);
            p.conditions.push_back({zero_pad("C", k + 1, 3), t});
          }
        }
      }
    }
  }

  static void gen_medications(World& world, World::PatientData& p, int pidx,
                              const std::vector<CodeParams>& params) {
    const auto& cfg = world.config_;
    const double span_years =
        static_cast<double>(cfg.sim_horizon - cfg.history_start) /
        (365.25 * kDay);
    for (int k = 0; k < static_cast<int>(params.size()); ++k) {
      Rng r = Rng::keyed(cfg.seed, "med", pidx, k);
      const double p_active =
          sigmoid(params[k].alpha + params[k].beta * p.severity);
      if (r.u01() >= p_active) {
        if (cfg.drift && cfg.drift->covariate_shift != 0.0) {
          const double p_shift =
              sigmoid(params[k].alpha +
                      params[k].beta * (p.severity + cfg.drift->covariate_shift));
          const double p_extra =
              std::max(0.0, p_shift - p_active) / (1.0 - p_active);
          Rng rd = Rng::keyed(cfg.seed, "meddrift", pidx, k);
          if (rd.u01() < p_extra) {
            const Timestamp span = cfg.sim_horizon - cfg.drift->start_time;
            const int n = 1 + rd.poisson(0.8);
            for (int j = 0; j < n && span > 0; ++j) {
              const Timestamp t = cfg.drift->start_time +
                                  static_cast<Timestamp>(rd.u01() * span);
              p.medications.push_back({zero_pad("M", k + 1, 3), t});
            }
          }
        }
        continue;
      }
      // Background refills across the whole span keep 28-day windows
      // populated at any inference time.
      const int n = r.poisson(1.8 * span_years);
      for (int j = 0; j < n; ++j) {
        const Timestamp t =
            cfg.history_start +
            static_cast<Timestamp>(r.u01() * (cfg.sim_horizon - cfg.history_start));
        p.medications.push_back({zero_pad("M", k + 1, 3), t});
      }
    }
  }

  // Inpatient-style encounters: multi-day stays with daily panel orders and
  // medication administrations. Orders inside the history window are
  // materialized immediately; orders in the simulation window are planned
  // for the live driver to sign.
  static void gen_encounters(World& world) {
    const auto& cfg = world.config_;
    const int first_year = year_of(cfg.history_start);
    const int last_year = year_of(cfg.sim_horizon - 1);

    struct PlannedMore {
      int pidx;
      PanelCode panel;
      Timestamp t;
    };
    std::vector<PlannedMore> history_orders;

    for (int pidx = 0; pidx < static_cast<int>(world.patients_.size()); ++pidx) {
      auto& p = world.patients_[pidx];
      for (int year = first_year; year <= last_year; ++year) {
        const Timestamp y0 =
            std::max(cfg.history_start, timestamp_from_civil({year, 1, 1}));
        const Timestamp y1 =
            std::min(cfg.sim_horizon, timestamp_from_civil({year + 1, 1, 1}));
        if (y0 >= y1) continue;
        const double frac = static_cast<double>(y1 - y0) / (365.25 * kDay);
        const bool sim_window = y0 >= cfg.history_end;
        const double rate_mult = sim_window ? cfg.sim_rate : 1.0;

        Rng r = Rng::keyed(cfg.seed, "enc", pidx, year, sim_window ? 1 : 0);
        const double lambda = 0.65 * rate_mult * frac *
                              std::exp(0.22 * clamp(p.severity, -2.0, 2.0));
        const int n_enc = r.poisson(lambda);
        for (int e = 0; e < n_enc; ++e) {
          const Timestamp enc_start =
              y0 + static_cast<Timestamp>(r.u01() * std::max<Timestamp>(
                                                        1, y1 - y0 - days(15)));
          const int dur_days = 2 + r.poisson(3.0);
          for (int d = 0; d < dur_days; ++d) {
            const Timestamp day = enc_start + days(d);
            if (day >= cfg.sim_horizon) break;
            for (PanelCode panel : all_panels()) {
              if (r.u01() >= 0.70) continue;
              const Timestamp t =
                  day + hours(6) +
                  static_cast<Timestamp>(r.u01() * hours(6)) / kMinute * kMinute;
              if (t < cfg.history_end) {
                history_orders.push_back({pidx, panel, t});
              } else if (t < cfg.sim_horizon) {
                world.planned_sim_orders_.push_back(
                    {p.record.patient_id, panel, t});
              }
            }
            // Medication administrations on stay days.
            if (d == 0 || r.u01() < 0.35) {
              const int n_meds = 1 + r.poisson(1.0);
              for (int m = 0; m < n_meds; ++m) {
                const int k = static_cast<int>(
                    r.index(cfg.medication_vocab_size));
                const Timestamp mt =
                    day + static_cast<Timestamp>(r.u01() * kDay);
                if (mt < cfg.sim_horizon) {
                  p.medications.push_back({zero_pad("M", k + 1, 3), mt});
                }
              }
            }
          }
        }
      }
    }

    // Orders get ids in chronological sequence, mirroring a transactional
    // system's arrival order; the live plan stays sorted for the driver.
    std::sort(history_orders.begin(), history_orders.end(),
              [](const PlannedMore& a, const PlannedMore& b) {
                if (a.t != b.t) return a.t < b.t;
                if (a.pidx != b.pidx) return a.pidx < b.pidx;
                return static_cast<int>(a.panel) < static_cast<int>(b.panel);
              });
    for (const auto& h : history_orders) {
      world.sign_order(world.patients_[h.pidx].record.patient_id, h.panel, h.t,
                       nullptr);
    }
    std::sort(world.planned_sim_orders_.begin(), world.planned_sim_orders_.end(),
              [](const PlannedOrder& a, const PlannedOrder& b) {
                if (a.order_time != b.order_time)
                  return a.order_time < b.order_time;
                if (a.patient_id != b.patient_id)
                  return a.patient_id < b.patient_id;
                return static_cast<int>(a.panel_code) <
                       static_cast<int>(b.panel_code);
              });
  }
};

std::unique_ptr<World> generate_world(const WorldConfig& config) {
  return WorldBuilder::build(config);
}

}  // namespace clinloop::emr
