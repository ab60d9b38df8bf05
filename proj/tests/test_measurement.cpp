#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "flexris/channel.hpp"
#include "flexris/measurement.hpp"

using namespace flexris;

namespace {

// Cascade through the channel-matrix route: sqrt(Pt) h_r diag(e^{jw}) H_t with
// a unit point source at the BS.
double cascade_power(const SurfaceCoeffs& c, const PhaseConfig& phase, const Vec3& u_mu, const Scene& s) {
    const auto ris = element_positions(s.grid, c);
    const std::vector<Vec3> bs{s.u_bs}, mu{u_mu};
    const double ct = pathloss_amplitude(s.u_bs.norm(), s.radio, 2.0);
    const double cr = pathloss_amplitude(u_mu.norm(), s.radio, 2.0);
    const ChannelMatrix ht = los_channel(ris, bs, ct, s.kappa());
    const ChannelMatrix hr = los_channel(mu, ris, cr, s.kappa());
    cplx y{0.0, 0.0};
    for (Eigen::Index n = 0; n < ht.rows(); ++n) y += hr(0, n) * std::polar(1.0, phase.phases[static_cast<std::size_t>(n)]) * ht(n, 0);
    return std::norm(std::sqrt(s.radio.tx_power) * y);
}

PhaseConfig random_phase(const RisGrid& g, Rng& rng) {
    PhaseConfig p{g.n_y, g.n_z, {}};
    for (std::size_t n = 0; n < g.size(); ++n) p.phases.push_back(uniform(rng, -std::numbers::pi, std::numbers::pi));
    return p;
}

}  // namespace

TEST(Scene, Defaults) {
    const Scene s;
    EXPECT_EQ(s.grid.n_y, 40);
    EXPECT_EQ(s.grid.n_z, 10);
    EXPECT_DOUBLE_EQ(s.grid.d_y, 299792458.0 / 28e9 / 2);
    EXPECT_EQ(s.u_bs, (Vec3{40, 20, 5}));
    EXPECT_NEAR(s.noise_power(), 3.17e-13, 0.005e-13);
    const Vec3 u{10, 2, -5};
    const double a = std::sqrt(std::pow(10.0, -6.1) / 2025.0) * std::sqrt(std::pow(10.0, -6.1) / 129.0);
    EXPECT_NEAR(s.cascade_amplitude(u) / a, 1.0, 1e-12);
    EXPECT_NEAR(s.coherent_max(u) / std::pow(400 * a, 2), 1.0, 1e-12);
}

TEST(ReceivedPower, PlanarDesignReachesCoherentMaximum) {
    const Scene s;
    const Vec3 u{10, 2, -5};
    const auto phase = planar_phase(s.grid, s.u_bs, u, s.kappa());
    EXPECT_NEAR(received_power(SurfaceCoeffs{}, phase, u, s) / s.coherent_max(u), 1.0, 1e-12);
}

TEST(ReceivedPower, HalfWavelengthPathDifferenceCancels) {
    Scene s;
    const double lambda = s.radio.wavelength();
    s.grid = RisGrid(2, 1, lambda / 2, lambda / 2);
    s.u_bs = {30.0, 0.0, 0.0};  // equidistant from both elements
    const Vec3 u{0.0, 5.0, 0.0};  // distances differ by exactly d_y
    const PhaseConfig zero{2, 1, {0.0, 0.0}};
    EXPECT_LT(received_power(SurfaceCoeffs{}, zero, u, s) / s.coherent_max(u), 1e-20);
}

TEST(ReceivedPower, GlobalPhaseInvariance) {
    const Scene s;
    Rng rng = substream(5, 0);
    const auto c = sample_coeffs(0.8, rng);
    const auto phase = random_phase(s.grid, rng);
    const Vec3 u{8.0, 1.5, -5.0};
    const double p = received_power(c, phase, u, s);
    for (double d : {0.3, -2.0, 3.1}) EXPECT_NEAR(received_power(c, phase.offset(d), u, s) / p, 1.0, 1e-10);
}

TEST(ReceivedPower, GeometryAwareDesignIsTheMaximizer) {
    const Scene s;
    Rng rng = substream(6, 0);
    for (int t = 0; t < 3; ++t) {
        const auto c = sample_coeffs(0.8, rng);
        const Vec3 u = s.coverage.sample(rng);
        const double best = received_power(c, geometry_aware_phase(s.grid, c, s.u_bs, u, s.kappa()), u, s);
        EXPECT_NEAR(best / s.coherent_max(u), 1.0, 1e-9);
        for (int k = 0; k < 100; ++k) EXPECT_LT(received_power(c, random_phase(s.grid, rng), u, s), best);
        EXPECT_LE(received_power(c, planar_phase(s.grid, s.u_bs, u, s.kappa()), u, s), best);
    }
}

TEST(ReceivedPower, MatchesChannelMatrixCascade) {
    const Scene s;
    Rng rng = substream(7, 0);
    for (int t = 0; t < 10; ++t) {
        const auto c = sample_coeffs(0.8, rng);
        const Vec3 u = s.coverage.sample(rng);
        const auto phase = random_phase(s.grid, rng);
        const double ref = cascade_power(c, phase, u, s);
        EXPECT_NEAR(received_power(c, phase, u, s) / ref, 1.0, 1e-10);
    }
}

TEST(ReceivedPower, Errors) {
    const Scene s;
    const PhaseConfig wrong{1, 1, {0.0}};
    EXPECT_THROW(received_power(SurfaceCoeffs{}, wrong, Vec3{10, 2, -5}, s), std::invalid_argument);
}

TEST(MinSpacing, Values) {
    EXPECT_DOUBLE_EQ(min_spacing(10, 40), 0.5);
    EXPECT_DOUBLE_EQ(min_spacing(10, 10), 2.0);
    EXPECT_DOUBLE_EQ(min_spacing(1, 2), 1.0);
    EXPECT_THROW(min_spacing(0, 4), std::invalid_argument);
    EXPECT_THROW(min_spacing(1, 0), std::invalid_argument);
}

TEST(MeasurementGrid, DefaultLayout) {
    const Scene s;
    const auto pts = measurement_grid(s.coverage, 10.0, s.grid);
    ASSERT_EQ(pts.size(), 25u);
    std::set<double> xs, ys;
    for (const auto& p : pts) {
        xs.insert(p.x);
        ys.insert(p.y);
        EXPECT_EQ(p.z, -5.0);
    }
    EXPECT_EQ(std::vector<double>(xs.begin(), xs.end()), (std::vector<double>{6, 8, 10, 12, 14}));
    EXPECT_EQ(std::vector<double>(ys.begin(), ys.end()), (std::vector<double>{1, 1.5, 2, 2.5, 3}));
    std::vector<double> yv(ys.begin(), ys.end());
    for (std::size_t i = 1; i < yv.size(); ++i) EXPECT_GE(yv[i] - yv[i - 1], min_spacing(10, 40) - 1e-12);
}

TEST(MeasurementGrid, SinglePointArea) {
    const Scene s;
    const auto pts = measurement_grid(Box{{7, 2, -5}, {7, 2, -5}}, 10.0, s.grid);
    ASSERT_EQ(pts.size(), 1u);
    EXPECT_EQ(pts[0], (Vec3{7, 2, -5}));
    EXPECT_THROW(measurement_grid(Box{{7, 2, -5}, {6, 2, -5}}, 10.0, s.grid), std::invalid_argument);
}

TEST(MeasurementPlan, Validation) {
    const Scene s;
    MeasurementPlan p = default_plan(s);
    EXPECT_EQ(p.k(), 25u);
    EXPECT_EQ(p.m(), 25u);
    EXPECT_EQ(p.entry_count(), 25u);
    p.configs.pop_back();
    EXPECT_THROW(p.validate(s.grid), std::invalid_argument);
    p.scheme = Scheme::Full;
    EXPECT_NO_THROW(p.validate(s.grid));
    EXPECT_EQ(p.entry_count(), 25u * 24u);
    EXPECT_EQ(p.entry(24), (std::pair<std::size_t, std::size_t>{1, 0}));
}

TEST(PowerTable, PlanarDiagonalIsCoherentMaximum) {
    const Scene s;
    const auto plan = default_plan(s);
    const auto t = build_power_table(SurfaceCoeffs{}, plan, s);
    ASSERT_EQ(t.values.size(), 25u);
    for (std::size_t k = 0; k < 25; ++k) EXPECT_NEAR(t.at(k, k) / s.coherent_max(plan.locations[k]), 1.0, 1e-12);
    EXPECT_THROW(t.at(0, 1), std::out_of_range);
}

TEST(PowerTable, FullSchemeOffTargetNeverExceedsOnTarget) {
    const Scene s;
    const auto plan = default_plan(s, Scheme::Full);
    const auto t = build_power_table(SurfaceCoeffs{}, plan, s);
    ASSERT_EQ(t.values.size(), 625u);
    for (std::size_t k = 0; k < 25; ++k)
        for (std::size_t m = 0; m < 25; ++m) {
            EXPECT_GE(t.at(k, m), 0.0);
            if (m != k) {
                EXPECT_LE(t.at(k, m), t.at(k, k));
            }
        }
}

TEST(PowerModel, MatchesDirectEvaluation) {
    const Scene s;
    const auto plan = default_plan(s, Scheme::Full);
    const PowerModel model(plan, s);
    Rng rng = substream(8, 0);
    const auto c = sample_coeffs(0.6, rng);
    const auto t = model.table(c);
    for (std::size_t k = 0; k < 25; k += 6)
        for (std::size_t m = 0; m < 25; m += 4) {
            const double ref = received_power(c, plan.configs[m], plan.locations[k], s);
            EXPECT_NEAR(t.at(k, m) / ref, 1.0, 1e-9);
        }
    const auto norm = model.normalized(c);
    for (std::size_t i = 0; i < norm.size(); ++i) EXPECT_NEAR(norm[i], t.values[i] / model.entry_scale(i), 1e-15);
}

TEST(PowerModel, NoisyTableNeedsRng) {
    const Scene s;
    const PowerModel model(default_plan(s), s);
    EXPECT_THROW(model.table(SurfaceCoeffs{}, 1e-13), std::invalid_argument);
}

TEST(BeamPattern, TransverseNullAtMinimumSpacing) {
    const Scene s;
    const Vec3 target{10, 2, -5};
    const auto phase = planar_phase(s.grid, s.u_bs, target, s.kappa());
    const double peak = received_power(SurfaceCoeffs{}, phase, target, s);
    for (double off : {-0.5, 0.5}) {
        const double p = received_power(SurfaceCoeffs{}, phase, Vec3{10, 2 + off, -5}, s);
        EXPECT_LE(10.0 * std::log10(p / peak), -10.0);
    }
}

TEST(PowerTableCsv, RoundTrip) {
    const Scene s;
    for (Scheme scheme : {Scheme::Diagonal, Scheme::Full}) {
        const auto plan = default_plan(s, scheme);
        Rng rng = substream(10, 0);
        const auto t = build_power_table(sample_coeffs(0.4, rng), plan, s);
        std::stringstream ss;
        write_power_table_csv(ss, t, plan);
        const auto back = read_power_table_csv(ss, s);
        EXPECT_EQ(back.plan.scheme, scheme);
        EXPECT_EQ(back.plan.locations, plan.locations);
        ASSERT_EQ(back.table.values.size(), t.values.size());
        for (std::size_t i = 0; i < t.values.size(); ++i) EXPECT_EQ(back.table.values[i], t.values[i]);
    }
}

TEST(PowerTableCsv, CorruptInput) {
    const Scene s;
    std::istringstream empty("");
    EXPECT_THROW(read_power_table_csv(empty, s), FormatError);
    std::istringstream header("k,x,y,z,omega_1\n1,10,2,-5,abc\n");
    EXPECT_THROW(read_power_table_csv(header, s), FormatError);
    std::istringstream ragged("k,x,y,z,omega_1,omega_2\n1,10,2,-5,1e-13\n");
    EXPECT_THROW(read_power_table_csv(ragged, s), FormatError);
}

TEST(Dataset, SingleZeroSample) {
    const Scene s;
    const auto plan = default_plan(s);
    const auto ds = generate_dataset(1, 0.0, plan, s, 1);
    ASSERT_EQ(ds.size(), 1u);
    EXPECT_EQ(ds.targets[0], SurfaceCoeffs{});
    for (std::size_t k = 0; k < 25; ++k) EXPECT_NEAR(ds.input(0)[k] / s.coherent_max(plan.locations[k]), 1.0, 1e-12);
}

TEST(Dataset, DistinctTargetsWithinSupport) {
    const Scene s;
    const auto ds = generate_dataset(100, 0.8, default_plan(s), s, 2);
    std::set<double> seen;
    for (const auto& t : ds.targets) {
        EXPECT_GE(t.a_yy, 0.0);
        EXPECT_LE(t.a_yy, 0.8);
        seen.insert(t.a_yy);
    }
    EXPECT_EQ(seen.size(), 100u);
}

TEST(Dataset, DefaultInputDimension) {
    const Scene s;
    const auto ds = generate_dataset(18225, 0.8, default_plan(s), s, 3);
    EXPECT_EQ(ds.size(), 18225u);
    EXPECT_EQ(ds.input_dim, 25u);
}

TEST(Dataset, FeatureOptions) {
    const Scene s;
    const auto plan = default_plan(s);
    DatasetOptions o;
    o.power_db = true;
    o.include_coords = true;
    const auto db = generate_dataset(3, 0.5, plan, s, 4, o);
    const auto lin = generate_dataset(3, 0.5, plan, s, 4);
    EXPECT_EQ(db.input_dim, 75u);
    EXPECT_EQ(db.flags, dataset_flags::with_coords | dataset_flags::power_db);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t k = 0; k < 25; ++k) EXPECT_NEAR(db.input(i)[k], 10.0 * std::log10(lin.input(i)[k]), 1e-12);
        EXPECT_EQ(db.input(i)[25], plan.locations[0].x);
        EXPECT_EQ(db.input(i)[26], plan.locations[0].y);
    }
    EXPECT_EQ(DatasetOptions::from_flags(db.flags).power_db, true);
}

TEST(Dataset, NoisyIsDeterministicAndDiffers) {
    const Scene s;
    const auto plan = default_plan(s);
    DatasetOptions o;
    o.noisy = true;
    const auto a = generate_dataset(5, 0.5, plan, s, 4, o);
    const auto b = generate_dataset(5, 0.5, plan, s, 4, o);
    const auto clean = generate_dataset(5, 0.5, plan, s, 4);
    EXPECT_EQ(a, b);
    EXPECT_NE(a.inputs, clean.inputs);
    EXPECT_EQ(a.targets, clean.targets);
}

TEST(Dataset, IndependentOfThreadCount) {
    const Scene s;
    const auto plan = default_plan(s, Scheme::Full);
    thread_limit() = 1;
    const auto a = generate_dataset(40, 0.8, plan, s, 9);
    thread_limit() = 3;
    const auto b = generate_dataset(40, 0.8, plan, s, 9);
    thread_limit() = 0;
    EXPECT_EQ(checksum(a), checksum(b));
    EXPECT_EQ(a, b);
}

TEST(MinMax, Examples) {
    Dataset ds{1, 0, {2.0, 4.0, 6.0}, std::vector<SurfaceCoeffs>(3)};
    const auto [norm, scaler] = normalize_minmax(ds);
    EXPECT_EQ(norm.inputs, (std::vector<double>{0.0, 0.5, 1.0}));

    Dataset flat{2, 0, {1.0, 5.0, 1.0, 7.0}, std::vector<SurfaceCoeffs>(2)};
    const auto [n2, s2] = normalize_minmax(flat);
    EXPECT_TRUE(s2.degenerate(0));
    EXPECT_FALSE(s2.degenerate(1));
    EXPECT_EQ(n2.input(0)[0], 0.0);
    EXPECT_EQ(n2.input(1)[0], 0.0);

    EXPECT_THROW(MinMaxScaler::fit(Dataset{}), std::invalid_argument);
}

TEST(MinMax, RoundTrip) {
    const Scene s;
    const auto ds = generate_dataset(50, 0.8, default_plan(s), s, 12);
    const auto sc = MinMaxScaler::fit(ds);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto x = ds.input(i);
        const auto z = sc.transform(x);
        for (double v : z) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
        const auto back = sc.inverse(z);
        for (std::size_t j = 0; j < x.size(); ++j) EXPECT_NEAR(back[j], x[j], 1e-12 * std::abs(x[j]) + 1e-300);
    }
}

TEST(Split, Sizes) {
    Dataset ten{1, 0, std::vector<double>(10, 0.0), std::vector<SurfaceCoeffs>(10)};
    const auto p = split(ten, 1);
    EXPECT_EQ(p.train.size(), 8u);
    EXPECT_EQ(p.validation.size(), 1u);
    EXPECT_EQ(p.test.size(), 1u);

    Dataset big{1, 0, std::vector<double>(18225, 0.0), std::vector<SurfaceCoeffs>(18225)};
    const auto q = split(big, 1);
    EXPECT_EQ(q.train.size(), 14581u);
    EXPECT_EQ(q.validation.size(), 1822u);
    EXPECT_EQ(q.test.size(), 1822u);

    Dataset nine{1, 0, std::vector<double>(9, 0.0), std::vector<SurfaceCoeffs>(9)};
    EXPECT_THROW(split(nine, 1), std::invalid_argument);
    EXPECT_THROW(split(ten, 1, {0.5, 0.5, 0.5}), std::invalid_argument);
}

TEST(Split, DisjointExhaustiveDeterministic) {
    Dataset ds{1, 0, {}, {}};
    for (int i = 0; i < 57; ++i) {
        ds.inputs.push_back(i);
        ds.targets.push_back({});
    }
    const auto a = split(ds, 42);
    const auto b = split(ds, 42);
    EXPECT_EQ(a.train, b.train);
    EXPECT_EQ(a.test, b.test);
    std::vector<double> all;
    for (const auto* part : {&a.train, &a.validation, &a.test}) all.insert(all.end(), part->inputs.begin(), part->inputs.end());
    std::sort(all.begin(), all.end());
    for (int i = 0; i < 57; ++i) EXPECT_EQ(all[static_cast<std::size_t>(i)], i);
    EXPECT_NE(split(ds, 43).train, a.train);
}

TEST(DatasetFile, RoundTripAndHeader) {
    const Scene s;
    const auto ds = generate_dataset(4, 0.5, default_plan(s), s, 13);
    std::ostringstream os(std::ios::binary);
    write_dataset(os, ds);
    const std::string bytes = os.str();
    ASSERT_EQ(bytes.size(), 4u + 4u + 8u + 4u + 4u + 4u * (25u + 5u) * 8u);
    EXPECT_EQ(bytes.substr(0, 4), "FRIS");
    EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 4);
    EXPECT_EQ(static_cast<unsigned char>(bytes[16]), 25);
    std::istringstream is(bytes, std::ios::binary);
    EXPECT_EQ(read_dataset(is), ds);
}

TEST(DatasetFile, CorruptInput) {
    const Scene s;
    const auto ds = generate_dataset(2, 0.5, default_plan(s), s, 14);
    std::ostringstream os(std::ios::binary);
    write_dataset(os, ds);
    const std::string bytes = os.str();

    std::istringstream truncated(bytes.substr(0, bytes.size() - 1), std::ios::binary);
    EXPECT_THROW(read_dataset(truncated), FormatError);
    std::istringstream trailing(bytes + "x", std::ios::binary);
    EXPECT_THROW(read_dataset(trailing), FormatError);
    std::string bad = bytes;
    bad[0] = 'X';
    std::istringstream magic(bad, std::ios::binary);
    EXPECT_THROW(read_dataset(magic), FormatError);
    std::string huge = bytes;
    huge[15] = '\x7f';  // S near 2^63
    std::istringstream count(huge, std::ios::binary);
    EXPECT_THROW(read_dataset(count), FormatError);
}

TEST(ScalerFile, RoundTrip) {
    const MinMaxScaler s{{1.0, -2.0, 3.5}, {2.0, 4.0, 3.5}};
    std::ostringstream os(std::ios::binary);
    write_scaler(os, s);
    EXPECT_EQ(os.str().size(), 48u);
    std::istringstream is(os.str(), std::ios::binary);
    EXPECT_EQ(read_scaler(is, 3), s);
}
