#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "stprotein/autoencoder.hpp"
#include "stprotein/csv.hpp"
#include "stprotein/errors.hpp"
#include "stprotein/optim.hpp"
#include "stprotein/preprocess.hpp"

namespace stprotein {

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian; big-endian hosts are unsupported");

/// CRC-32 (reflected polynomial 0xEDB88320), the variant whose check value for
/// "123456789" is 0xCBF43926.
inline std::uint32_t crc32(const void* data, std::size_t len) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t crc = 0xFFFFFFFFu;
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ bytes[i]) & 0xFFu] ^ (crc >> 8);
    return crc ^ 0xFFFFFFFFu;
}

inline void to_json(nlohmann::json& j, const TrainConfig& cfg) {
    j = nlohmann::json{{"lr", cfg.lr},
                       {"weight_decay", cfg.weight_decay},
                       {"epochs", cfg.epochs},
                       {"beta1_loss", cfg.beta1_loss},
                       {"beta2_loss", cfg.beta2_loss},
                       {"adam_b1", cfg.adam_b1},
                       {"adam_b2", cfg.adam_b2},
                       {"adam_eps", cfg.adam_eps},
                       {"heads", cfg.heads},
                       {"f_h1", cfg.f_h1},
                       {"f_h2", cfg.f_h2},
                       {"k_neighbors", cfg.k_neighbors},
                       {"graph_kind", to_string(cfg.graph_kind)},
                       {"radius", cfg.radius},
                       {"tied", cfg.tied},
                       {"seed", cfg.seed},
                       {"log_every", cfg.log_every},
                       {"patience", cfg.patience}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& cfg) {
    j.at("lr").get_to(cfg.lr);
    j.at("weight_decay").get_to(cfg.weight_decay);
    j.at("epochs").get_to(cfg.epochs);
    j.at("beta1_loss").get_to(cfg.beta1_loss);
    j.at("beta2_loss").get_to(cfg.beta2_loss);
    j.at("adam_b1").get_to(cfg.adam_b1);
    j.at("adam_b2").get_to(cfg.adam_b2);
    j.at("adam_eps").get_to(cfg.adam_eps);
    j.at("heads").get_to(cfg.heads);
    cfg.f_h1 = j.at("f_h1").get<Eigen::Index>();
    cfg.f_h2 = j.at("f_h2").get<Eigen::Index>();
    j.at("k_neighbors").get_to(cfg.k_neighbors);
    cfg.graph_kind = graph_kind_from_string(j.at("graph_kind").get<std::string>());
    j.at("radius").get_to(cfg.radius);
    j.at("tied").get_to(cfg.tied);
    j.at("seed").get_to(cfg.seed);
    j.at("log_every").get_to(cfg.log_every);
    j.at("patience").get_to(cfg.patience);
}

struct CheckpointData {
    ModelParams params;
    TrainConfig config;
    PreprocessState rna_pipeline;
    PreprocessState protein_pipeline;
};

namespace detail {

inline constexpr char kMagic[5] = {'S', 'T', 'P', 'K', '\x01'};

/// Mutable flat view of every float64 array a checkpoint stores: the model's
/// unique tensors plus both pipelines' numeric state.
struct BlobEntry {
    std::string name;
    std::vector<std::int64_t> shape;
    double* data;
    std::size_t numel;
};

inline void append_pipeline_entries(const std::string& prefix, PreprocessState& st,
                                    std::vector<BlobEntry>& out) {
    out.push_back({prefix + "/per_spot_scale",
                   {st.per_spot_scale.size()},
                   st.per_spot_scale.data(),
                   static_cast<std::size_t>(st.per_spot_scale.size())});
    out.push_back({prefix + "/pca_mean",
                   {st.pca_mean.size()},
                   st.pca_mean.data(),
                   static_cast<std::size_t>(st.pca_mean.size())});
    out.push_back({prefix + "/pca_components",
                   {st.pca_components.rows(), st.pca_components.cols()},
                   st.pca_components.data(),
                   static_cast<std::size_t>(st.pca_components.size())});
}

inline std::vector<BlobEntry> blob_entries(ModelParams& params, PreprocessState& rna,
                                           PreprocessState& protein) {
    std::vector<BlobEntry> out;
    for (const auto& ref : tensor_refs(params)) {
        if (ref.mat)
            out.push_back({ref.name,
                           {ref.mat->rows(), ref.mat->cols()},
                           ref.mat->data(),
                           static_cast<std::size_t>(ref.mat->size())});
        else
            out.push_back({ref.name,
                           {ref.vec->size()},
                           ref.vec->data(),
                           static_cast<std::size_t>(ref.vec->size())});
    }
    append_pipeline_entries("rna_pipeline", rna, out);
    append_pipeline_entries("protein_pipeline", protein, out);
    return out;
}

inline nlohmann::json pipeline_meta(const PreprocessState& st) {
    return nlohmann::json{{"selected_gene_names", st.selected_gene_names},
                          {"scale_factor", st.scale_factor},
                          {"transform_kind", to_string(st.transform_kind)}};
}

inline void read_pipeline_meta(const nlohmann::json& j, PreprocessState& st) {
    j.at("selected_gene_names").get_to(st.selected_gene_names);
    j.at("scale_factor").get_to(st.scale_factor);
    st.transform_kind = transform_kind_from_string(j.at("transform_kind").get<std::string>());
}

} // namespace detail

/// Write a `.stpk` checkpoint: the 5 magic bytes, a little-endian uint64 length
/// prefix, a UTF-8 JSON manifest (tensor directory, CRC-32 of the blob, config,
/// pipeline metadata), then all tensors as row-major float64 little-endian.
inline void save_checkpoint(const std::string& path, const ModelParams& params,
                            const TrainConfig& cfg, const PreprocessState& rna_pipeline,
                            const PreprocessState& protein_pipeline) {
    // The entry list needs mutable pointers; saving only reads through them.
    auto& mut_params = const_cast<ModelParams&>(params);
    auto& mut_rna = const_cast<PreprocessState&>(rna_pipeline);
    auto& mut_prot = const_cast<PreprocessState&>(protein_pipeline);
    const auto entries = detail::blob_entries(mut_params, mut_rna, mut_prot);

    std::string blob;
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& e : entries) {
        nlohmann::json t;
        t["name"] = e.name;
        t["shape"] = e.shape;
        t["offset"] = blob.size();
        tensors.push_back(std::move(t));
        const auto* bytes = reinterpret_cast<const char*>(e.data);
        blob.append(bytes, e.numel * sizeof(double));
    }

    nlohmann::json manifest;
    manifest["tensors"] = std::move(tensors);
    manifest["blob_size"] = blob.size();
    manifest["blob_crc32"] = crc32(blob.data(), blob.size());
    manifest["config"] = cfg;
    manifest["rna_pipeline"] = detail::pipeline_meta(rna_pipeline);
    manifest["protein_pipeline"] = detail::pipeline_meta(protein_pipeline);

    const std::string mjson = manifest.dump();
    std::string out;
    out.reserve(sizeof(detail::kMagic) + 8 + mjson.size() + blob.size());
    out.append(detail::kMagic, sizeof(detail::kMagic));
    const std::uint64_t mlen = mjson.size();
    char lenbuf[8];
    std::memcpy(lenbuf, &mlen, 8);
    out.append(lenbuf, 8);
    out += mjson;
    out += blob;
    csv::write_file_atomic(path, out);
}

/// Read back a `.stpk` checkpoint. Tensors are located by manifest name, so a
/// reordered manifest with consistent offsets loads identically. Structural
/// problems (magic, JSON, directory) raise ManifestError; a short or corrupted
/// blob raises ChecksumError.
inline CheckpointData load_checkpoint(const std::string& path) {
    const std::string raw = csv::read_file(path);
    if (raw.size() < sizeof(detail::kMagic) + 8) throw ManifestError(path + ": not a checkpoint file");
    if (std::memcmp(raw.data(), detail::kMagic, sizeof(detail::kMagic)) != 0)
        throw ManifestError(path + ": bad magic bytes");

    std::uint64_t mlen = 0;
    std::memcpy(&mlen, raw.data() + sizeof(detail::kMagic), 8);
    const std::size_t blob_start = sizeof(detail::kMagic) + 8 + mlen;
    if (blob_start > raw.size()) throw ManifestError(path + ": manifest length exceeds file size");

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(raw.substr(sizeof(detail::kMagic) + 8, mlen));
    } catch (const nlohmann::json::exception& e) {
        throw ManifestError(path + ": manifest is not valid JSON: " + e.what());
    }

    CheckpointData out;
    std::uint64_t blob_size = 0;
    std::uint32_t expect_crc = 0;
    try {
        out.config = manifest.at("config").get<TrainConfig>();
        detail::read_pipeline_meta(manifest.at("rna_pipeline"), out.rna_pipeline);
        detail::read_pipeline_meta(manifest.at("protein_pipeline"), out.protein_pipeline);
        blob_size = manifest.at("blob_size").get<std::uint64_t>();
        expect_crc = manifest.at("blob_crc32").get<std::uint32_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ManifestError(path + ": manifest missing required fields: " + e.what());
    }

    const std::size_t avail = raw.size() - blob_start;
    if (avail < blob_size) throw ChecksumError(path + ": blob truncated");
    const char* blob = raw.data() + blob_start;
    if (crc32(blob, blob_size) != expect_crc) throw ChecksumError(path + ": blob CRC mismatch");

    // Directory of (shape, offset) by name, with bounds and totals validated.
    struct Slot {
        std::vector<std::int64_t> shape;
        std::uint64_t offset;
    };
    std::unordered_map<std::string, Slot> directory;
    std::uint64_t total_bytes = 0;
    try {
        for (const auto& t : manifest.at("tensors")) {
            Slot slot;
            slot.shape = t.at("shape").get<std::vector<std::int64_t>>();
            slot.offset = t.at("offset").get<std::uint64_t>();
            std::uint64_t numel = 1;
            for (auto d : slot.shape) {
                if (d < 0) throw ManifestError(path + ": negative tensor dimension");
                numel *= static_cast<std::uint64_t>(d);
            }
            if (slot.offset + numel * sizeof(double) > blob_size)
                throw ManifestError(path + ": tensor '" + t.at("name").get<std::string>() +
                                    "' extends past the blob");
            total_bytes += numel * sizeof(double);
            if (!directory.emplace(t.at("name").get<std::string>(), std::move(slot)).second)
                throw ManifestError(path + ": duplicate tensor name");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ManifestError(path + ": bad tensor directory: " + e.what());
    }
    if (total_bytes != blob_size)
        throw ManifestError(path + ": tensor sizes sum to " + std::to_string(total_bytes) +
                            " bytes, blob has " + std::to_string(blob_size));

    auto take = [&](const std::string& name) -> const Slot& {
        auto it = directory.find(name);
        if (it == directory.end()) throw ManifestError(path + ": missing tensor '" + name + "'");
        return it->second;
    };
    auto fill = [&](detail::BlobEntry& e) {
        const Slot& slot = take(e.name);
        if (slot.shape != e.shape)
            throw ManifestError(path + ": tensor '" + e.name + "' has unexpected shape");
        std::memcpy(e.data, blob + slot.offset, e.numel * sizeof(double));
    };

    // Rebuild the parameter skeleton from the stored shapes, then fill values.
    const auto& dir_w1 = take("enc_layer1/head0/w");
    const auto& dir_w2 = take("enc_layer2/head0/w");
    const auto& dir_fc = take("enc_fc/w");
    if (dir_w1.shape.size() != 2 || dir_w2.shape.size() != 2 || dir_fc.shape.size() != 2)
        throw ManifestError(path + ": model tensor shapes malformed");
    ModelDims dims{dir_fc.shape[0], dir_w1.shape[0], dir_w2.shape[0]};
    out.params = init_params(dims, out.config.heads, 0, out.config.tied);

    auto size_pipeline = [&](const std::string& prefix, PreprocessState& st) {
        const auto& scale = take(prefix + "/per_spot_scale");
        const auto& mean = take(prefix + "/pca_mean");
        const auto& comps = take(prefix + "/pca_components");
        if (scale.shape.size() != 1 || mean.shape.size() != 1 || comps.shape.size() != 2)
            throw ManifestError(path + ": pipeline tensor shapes malformed");
        st.per_spot_scale.resize(scale.shape[0]);
        st.pca_mean.resize(mean.shape[0]);
        st.pca_components.resize(comps.shape[0], comps.shape[1]);
    };
    size_pipeline("rna_pipeline", out.rna_pipeline);
    size_pipeline("protein_pipeline", out.protein_pipeline);

    auto entries = detail::blob_entries(out.params, out.rna_pipeline, out.protein_pipeline);
    if (entries.size() != directory.size())
        throw ManifestError(path + ": manifest lists " + std::to_string(directory.size()) +
                            " tensors, expected " + std::to_string(entries.size()));
    for (auto& e : entries) fill(e);
    return out;
}

} // namespace stprotein
