#include <fstream>

#include <json.hpp>

#include "fundus/ctran.hpp"
#include "fundus/error.hpp"

namespace fundus::ctran {

namespace {

constexpr std::string_view kModule = "ctran";
constexpr std::string_view kFormat = "ctran-checkpoint";

[[noreturn]] void fail(ErrorCode code, const std::string& detail) { throw Error(kModule, code, detail); }

}  // namespace

void save_checkpoint(const CTranParams& params, const std::vector<std::string>& labels,
                     const std::filesystem::path& path) {
    if (labels.size() != params.n_labels()) fail(ErrorCode::DimMismatch, "label names do not match the model");
    nlohmann::ordered_json j;
    j["format"] = kFormat;
    j["version"] = 1;
    j["dim"] = params.dim();
    j["layers"] = params.n_layers();
    j["labels"] = labels;
    auto& tensors = j["tensors"] = nlohmann::ordered_json::array();
    const auto names = params.tensor_names();
    const auto values = params.tensors();
    for (std::size_t t = 0; t < values.size(); ++t) {
        const Matrix& m = *values[t];
        std::vector<double> data;
        data.reserve(static_cast<std::size_t>(m.size()));
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
        tensors.push_back({{"name", names[t]}, {"shape", {m.rows(), m.cols()}}, {"data", std::move(data)}});
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
    out << j.dump() << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::IoError, "invalid checkpoint JSON: " + std::string(e.what()));
    }
    if (j.value("format", "") != kFormat) fail(ErrorCode::IoError, "not a ctran checkpoint");

    Checkpoint ck;
    ck.labels = j.at("labels").get<std::vector<std::string>>();
    const auto dim = j.at("dim").get<std::size_t>();
    const auto n_layers = j.at("layers").get<std::size_t>();
    ck.params = CTranParams::init(ck.labels.size(), dim, n_layers, 0);
    const auto names = ck.params.tensor_names();
    auto tensors = ck.params.tensors();
    const auto& stored = j.at("tensors");
    if (stored.size() != tensors.size()) fail(ErrorCode::DimMismatch, "tensor count mismatch");
    for (std::size_t t = 0; t < tensors.size(); ++t) {
        const auto& e = stored[t];
        if (e.at("name").get<std::string>() != names[t]) fail(ErrorCode::DimMismatch, "unexpected tensor " + names[t]);
        const auto shape = e.at("shape").get<std::vector<Eigen::Index>>();
        const auto data = e.at("data").get<std::vector<double>>();
        Matrix& m = *tensors[t];
        if (shape.size() != 2 || shape[0] != m.rows() || shape[1] != m.cols() ||
            data.size() != static_cast<std::size_t>(m.size()))
            fail(ErrorCode::DimMismatch, "shape mismatch for " + names[t]);
        std::size_t k = 0;
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = data[k++];
    }
    ck.params.state_emb.row(0).setZero();
    return ck;
}

}  // namespace fundus::ctran
