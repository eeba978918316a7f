#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "ssba/boundary_io.hpp"
#include "ssba/models.hpp"
#include "ssba/models/model_io.hpp"

using namespace ssba;

namespace {

struct Fixture {
    Dataset data = make_classification(300, 3, 2.0, 11);
    std::shared_ptr<const Classifier> model = train_mlp(data, {6}, 0.2, 100, 11).first;
    BoundaryPointSet set;

    Fixture() {
        BoundaryOptions opt;
        opt.threshold_T = 1500;
        opt.seed = 11;
        opt.max_iter = 6;  // leave some points truncated
        set = generate_boundary_points(*model, data, opt);
    }
};

std::string serialize(const BoundaryPointSet& set) {
    std::ostringstream out(std::ios::binary);
    save_boundary(out, set);
    return out.str();
}

}  // namespace

TEST(BoundaryFile, RoundTripPreservesEverything) {
    const Fixture f;
    ASSERT_GT(std::count(f.set.truncated.begin(), f.set.truncated.end(), 1), 0);
    std::istringstream in(serialize(f.set), std::ios::binary);
    const auto back = load_boundary(in);
    EXPECT_EQ(back, f.set);
    EXPECT_EQ(back.model_fingerprint, f.model->fingerprint());
    EXPECT_EQ(back.method, BoundaryPointSet::Method::ssba);
}

TEST(BoundaryFile, GridSetRoundTrips) {
    const Fixture f;
    const auto grid = grid_boundary_points(*f.model, feature_bounds(f.data), 5, 1 << 20);
    std::istringstream in(serialize(grid), std::ios::binary);
    EXPECT_EQ(load_boundary(in), grid);
}

TEST(BoundaryFile, PathRoundTripAndByteIdentity) {
    const Fixture f;
    const auto dir = std::filesystem::temp_directory_path() / "ssba_persistence_test";
    std::filesystem::create_directories(dir);
    const auto path = (dir / "set.ssbab").string();
    save_boundary(path, f.set);
    EXPECT_EQ(load_boundary(path), f.set);
    EXPECT_EQ(std::filesystem::file_size(path), serialize(f.set).size());
    EXPECT_EQ(boundary_digest(f.set), boundary_digest(load_boundary(path)));
    std::filesystem::remove_all(dir);
}

TEST(BoundaryFile, LayoutIsLittleEndian) {
    const Fixture f;
    const auto bytes = serialize(f.set);
    ASSERT_GT(bytes.size(), 24u);
    EXPECT_EQ(bytes.substr(0, 8), std::string("SSBABND\0", 8));
    EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 1);  // version, low byte first
    EXPECT_EQ(bytes[9], 0);
    EXPECT_EQ(static_cast<unsigned char>(bytes[16]), 3);  // feature count
}

TEST(BoundaryFile, RegenerationIsByteIdentical) {
    const Fixture a, b;
    EXPECT_EQ(serialize(a.set), serialize(b.set));
}

TEST(BoundaryFile, MalformedInputsAreFormatErrors) {
    const Fixture f;
    const auto good = serialize(f.set);
    const auto load = [](std::string bytes) {
        std::istringstream in(std::move(bytes), std::ios::binary);
        return load_boundary(in);
    };
    EXPECT_THROW((void)load("not a boundary file at all"), format_error);
    auto wrong_version = good;
    wrong_version[8] = 2;
    EXPECT_THROW((void)load(wrong_version), format_error);
    auto wrong_method = good;
    wrong_method[12] = 7;
    EXPECT_THROW((void)load(wrong_method), format_error);
    EXPECT_THROW((void)load(good.substr(0, good.size() - 1)), format_error);
    EXPECT_THROW((void)load(good.substr(0, 30)), format_error);
    EXPECT_THROW((void)load_boundary(std::string("/nonexistent/dir/file.ssbab")), format_error);
}

TEST(BoundaryFile, PairIndexOutOfRangeRejected) {
    Fixture f;
    f.set.pair_indices[0].first = f.set.class0_rows.rows();
    std::istringstream in(serialize(f.set), std::ios::binary);
    EXPECT_THROW((void)load_boundary(in), format_error);
}

TEST(Fingerprint, MismatchWarns) {
    const Fixture f;
    std::ostringstream warn;
    EXPECT_TRUE(verify_fingerprint(f.set, *f.model, &warn));
    EXPECT_TRUE(warn.str().empty());
    const auto other = train_logistic(f.data, 0.1, 50, 1).first;
    EXPECT_FALSE(verify_fingerprint(f.set, *other, &warn));
    EXPECT_NE(warn.str().find("warning"), std::string::npos);
}

TEST(Fingerprint, SurvivesModelFileRoundTrip) {
    const Fixture f;
    std::stringstream s;
    save_model(s, *f.model);
    const auto back = load_model(s);
    EXPECT_EQ(back->fingerprint(), f.model->fingerprint());
    EXPECT_TRUE(verify_fingerprint(f.set, *back));
    EXPECT_EQ(back->predict_batch(f.set.points), f.model->predict_batch(f.set.points));
}

TEST(Digest, SensitiveToContent) {
    Fixture f;
    const auto before = boundary_digest(f.set);
    f.set.points(0, 0) = std::nextafter(f.set.points(0, 0), 1e9);
    EXPECT_NE(boundary_digest(f.set), before);
}
