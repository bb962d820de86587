#include "ltx/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

#include "ltx/linalg.hpp"

namespace ltx {

double quantile_sorted(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) return std::nan("");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
    const size_t lo = static_cast<size_t>(std::floor(h));
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] + (h - lo) * (sorted[lo + 1] - sorted[lo]);
}

namespace {

struct BinAccumulator {
    std::vector<std::vector<double>> samples;
    explicit BinAccumulator(int bins) : samples(bins) {}
    void add(double progress, double value, int bins) {
        int b = static_cast<int>(progress * bins);
        b = std::clamp(b, 0, bins - 1);
        samples[b].push_back(value);
    }
    std::vector<ProfileBin> finalize() const {
        std::vector<ProfileBin> out(samples.size());
        for (size_t b = 0; b < samples.size(); ++b) {
            auto v = samples[b];
            out[b].count = static_cast<long>(v.size());
            if (v.empty()) {
                out[b].mean = out[b].p25 = out[b].p75 = std::nan("");
                continue;
            }
            out[b].mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
            std::sort(v.begin(), v.end());
            out[b].p25 = quantile_sorted(v, 0.25);
            out[b].p75 = quantile_sorted(v, 0.75);
        }
        return out;
    }
};

}  // namespace

EntropyProfile aggregate_entropy(const std::vector<GenerationTrace>& traces, int bins,
                                 const std::vector<int>& sentence_end_ids) {
    if (traces.empty()) throw InputError("aggregate_entropy: no traces");
    if (bins < 1) throw InputError("aggregate_entropy: bins must be >= 1");
    EntropyProfile profile;
    profile.bins = bins;
    BinAccumulator latent(bins), expl(bins);
    const std::set<int> enders(sentence_end_ids.begin(), sentence_end_ids.end());
    long used = 0;
    for (const auto& t : traces) {
        const int s = static_cast<int>(t.latent_entropies.size());
        if (s == 0) {
            ++profile.skipped_traces;
            continue;
        }
        ++used;
        for (int i = 0; i < s; ++i) {
            const double progress = s == 1 ? 0.0 : static_cast<double>(i) / (s - 1);
            latent.add(progress, t.latent_entropies[i], bins);
        }
        if (!t.explicit_entropies.empty() &&
            t.explicit_entropies.size() == t.explicit_token_ids.size()) {
            // Split into sentences at terminal punctuation (inclusive).
            size_t start = 0;
            auto flush = [&](size_t end) {  // [start, end)
                const size_t len = end - start;
                if (len == 0) return;
                for (size_t j = start; j < end; ++j) {
                    const double progress =
                        len == 1 ? 0.0 : static_cast<double>(j - start) / (len - 1);
                    expl.add(progress, t.explicit_entropies[j], bins);
                }
                start = end;
            };
            for (size_t j = 0; j < t.explicit_token_ids.size(); ++j) {
                if (enders.count(t.explicit_token_ids[j])) flush(j + 1);
            }
            flush(t.explicit_token_ids.size());
        }
    }
    if (used == 0) throw InputError("aggregate_entropy: every trace had an empty latent phase");
    profile.latent = latent.finalize();
    profile.explicit_ = expl.finalize();
    return profile;
}

std::string format_entropy_profile(const EntropyProfile& p) {
    std::ostringstream out;
    out << "bin\tlo\thi\tlatent_count\tlatent_mean\tlatent_p25\tlatent_p75"
           "\texplicit_count\texplicit_mean\texplicit_p25\texplicit_p75\n";
    char buf[256];
    for (int b = 0; b < p.bins; ++b) {
        const ProfileBin& l = p.latent[b];
        const ProfileBin& e = p.explicit_[b];
        std::snprintf(buf, sizeof(buf),
                      "%d\t%.6g\t%.6g\t%ld\t%.9g\t%.9g\t%.9g\t%ld\t%.9g\t%.9g\t%.9g\n", b,
                      static_cast<double>(b) / p.bins, static_cast<double>(b + 1) / p.bins,
                      l.count, l.mean, l.p25, l.p75, e.count, e.mean, e.p25, e.p75);
        out << buf;
    }
    return out.str();
}

std::vector<StepBoxRow> per_step_entropy_distribution(const std::vector<GenerationTrace>& traces) {
    if (traces.empty()) throw InputError("per_step_entropy_distribution: no traces");
    size_t max_steps = 0;
    for (const auto& t : traces) max_steps = std::max(max_steps, t.latent_entropies.size());
    std::vector<StepBoxRow> rows;
    for (size_t s = 0; s < max_steps; ++s) {
        std::vector<double> values;
        for (const auto& t : traces) {
            if (s < t.latent_entropies.size()) values.push_back(t.latent_entropies[s]);
        }
        std::sort(values.begin(), values.end());
        StepBoxRow row;
        row.step = static_cast<int>(s) + 1;
        row.count = static_cast<long>(values.size());
        row.median = quantile_sorted(values, 0.5);
        row.q1 = quantile_sorted(values, 0.25);
        row.q3 = quantile_sorted(values, 0.75);
        const double iqr = row.q3 - row.q1;
        const double lo_fence = row.q1 - 1.5 * iqr;
        const double hi_fence = row.q3 + 1.5 * iqr;
        row.whisker_lo = row.q1;
        row.whisker_hi = row.q3;
        for (double v : values) {
            if (v >= lo_fence) {
                row.whisker_lo = v;  // first (lowest) inside the fence
                break;
            }
        }
        for (auto it = values.rbegin(); it != values.rend(); ++it) {
            if (*it <= hi_fence) {
                row.whisker_hi = *it;
                break;
            }
        }
        for (double v : values) {
            if (v < lo_fence || v > hi_fence) ++row.outliers;
        }
        rows.push_back(row);
    }
    return rows;
}

std::string format_step_boxes(const std::vector<StepBoxRow>& rows) {
    std::ostringstream out;
    out << "step\tcount\tmedian\tq1\tq3\twhisker_lo\twhisker_hi\toutliers\n";
    char buf[224];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%d\t%ld\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%ld\n", r.step,
                      r.count, r.median, r.q1, r.q3, r.whisker_lo, r.whisker_hi, r.outliers);
        out << buf;
    }
    return out.str();
}

PcaProjection pca_project(const std::vector<TaggedTrajectory>& trajectories, int k,
                          int max_explicit) {
    if (k < 1) throw InputError("pca: k must be >= 1");
    std::vector<const Vec*> pooled;
    int dim = -1;
    for (const auto& tr : trajectories) {
        for (const auto& v : tr.latent) pooled.push_back(&v);
        const int take = std::min<int>(max_explicit, static_cast<int>(tr.explicit_.size()));
        for (int i = 0; i < take; ++i) pooled.push_back(&tr.explicit_[i]);
    }
    for (const Vec* v : pooled) {
        if (dim < 0) dim = static_cast<int>(v->size());
        if (static_cast<int>(v->size()) != dim) throw InputError("pca: inconsistent dimensions");
    }
    if (static_cast<int>(pooled.size()) < k) {
        throw InputError("pca: fewer vectors than components");
    }
    if (k > dim) throw InputError("pca: k exceeds the hidden dimension");

    Vec mean(dim, 0.0);
    for (const Vec* v : pooled) {
        for (int i = 0; i < dim; ++i) mean[i] += (*v)[i];
    }
    for (int i = 0; i < dim; ++i) mean[i] /= static_cast<double>(pooled.size());

    Mat centered(static_cast<int>(pooled.size()), dim);
    for (size_t r = 0; r < pooled.size(); ++r) {
        for (int c = 0; c < dim; ++c) centered.at(static_cast<int>(r), c) = (*pooled[r])[c] - mean[c];
    }

    const linalg::SvdResult svd = linalg::thin_svd(centered);
    double total = 0.0;
    for (double s : svd.singular_values) total += s * s;

    PcaProjection out;
    out.k = k;
    Mat components(k, dim);
    for (int c = 0; c < k; ++c) {
        out.explained_variance.push_back(total > 0.0 ? svd.singular_values[c] *
                                                           svd.singular_values[c] / total
                                                     : 0.0);
        // Sign convention: largest-magnitude coordinate is positive.
        int arg = 0;
        for (int i = 1; i < dim; ++i) {
            if (std::fabs(svd.vt.at(c, i)) > std::fabs(svd.vt.at(c, arg))) arg = i;
        }
        const double sign = svd.vt.at(c, arg) < 0.0 ? -1.0 : 1.0;
        for (int i = 0; i < dim; ++i) components.at(c, i) = sign * svd.vt.at(c, i);
    }
    out.components = components;
    out.mean = mean;

    auto project_one = [&](const Vec& v) {
        Vec coords(k, 0.0);
        for (int c = 0; c < k; ++c) {
            double acc = 0.0;
            for (int i = 0; i < dim; ++i) acc += components.at(c, i) * (v[i] - mean[i]);
            coords[c] = acc;
        }
        return coords;
    };

    for (size_t t = 0; t < trajectories.size(); ++t) {
        for (size_t s = 0; s < trajectories[t].latent.size(); ++s) {
            out.points.push_back({static_cast<int>(t), static_cast<int>(s), 'l',
                                  project_one(trajectories[t].latent[s])});
        }
        for (size_t s = 0; s < trajectories[t].explicit_.size(); ++s) {
            out.points.push_back({static_cast<int>(t), static_cast<int>(s), 'e',
                                  project_one(trajectories[t].explicit_[s])});
        }
    }
    return out;
}

PcaProjection pca_project_traces(const std::vector<GenerationTrace>& traces, int k,
                                 int max_explicit) {
    std::vector<TaggedTrajectory> trs;
    for (const auto& t : traces) {
        if (t.latent_hidden_log.empty() && t.explicit_hidden_log.empty()) continue;
        trs.push_back({t.latent_hidden_log, t.explicit_hidden_log});
    }
    if (trs.empty()) {
        throw InputError("pca: traces carry no hidden logs; re-run generation with --log-hidden");
    }
    return pca_project(trs, k, max_explicit);
}

std::string format_pca_table(const PcaProjection& p) {
    std::ostringstream out;
    char buf[64];
    out << "# explained_variance_ratio:";
    for (double ev : p.explained_variance) {
        std::snprintf(buf, sizeof(buf), " %.9g", ev);
        out << buf;
    }
    out << "\ntrajectory\tstep\tphase";
    for (int c = 1; c <= p.k; ++c) out << "\tpc" << c;
    out << "\n";
    for (const auto& pt : p.points) {
        out << pt.trajectory << "\t" << pt.step << "\t" << pt.phase;
        for (double x : pt.coords) {
            std::snprintf(buf, sizeof(buf), "\t%.9g", x);
            out << buf;
        }
        out << "\n";
    }
    return out.str();
}

}  // namespace ltx
