#include <bit>
#include <cstring>
#include <fstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "sqlgan/training.hpp"

namespace sqlgan {

namespace {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'S', 'Q', 'G', 'T', 'E', 'N', 'S', '1'};

template <class T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& in, const std::filesystem::path& path) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw RuntimeAbort("truncated checkpoint " + path.string());
    return v;
}

json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw RuntimeAbort("cannot open checkpoint manifest " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw RuntimeAbort(fmt::format("malformed checkpoint manifest {}: {}", path.string(), e.what()));
    }
}

void write_manifest(const std::filesystem::path& dir, const std::string& stem, const CheckpointInfo& info) {
    const auto bin = dir / (stem + ".bin");
    json j;
    j["format_version"] = kCheckpointFormatVersion;
    j["kind"] = info.kind;
    j["config_hash"] = info.config_hash;
    j["vocab_file"] = info.vocab_file;
    j["round"] = info.round;
    j["dims"] = info.dims;
    j["tensor_file"] = bin.filename().string();
    j["tensor_sha256"] = sha256_file(bin.string());
    std::ofstream out(dir / (stem + ".json"));
    out << j.dump(2) << "\n";
    if (!out) throw RuntimeAbort("cannot write checkpoint manifest in " + dir.string());
}

std::size_t dim(const CheckpointInfo& info, const char* key) {
    const auto it = info.dims.find(key);
    if (it == info.dims.end()) throw RuntimeAbort(fmt::format("checkpoint manifest lacks dims.{}", key));
    return it->second;
}

// Verifies the digest and returns the tensor file next to the manifest.
std::filesystem::path tensor_file(const std::filesystem::path& manifest, const json& j) {
    const auto bin = manifest.parent_path() / j.at("tensor_file").get<std::string>();
    if (sha256_file(bin.string()) != j.at("tensor_sha256").get<std::string>()) {
        throw RuntimeAbort("checkpoint digest mismatch for " + bin.string());
    }
    return bin;
}

}  // namespace

void save_tensors(const std::filesystem::path& path, std::span<const TensorRef> tensors) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RuntimeAbort("cannot write " + path.string());
    out.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
        out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        put<std::int64_t>(out, t.rows);
        put<std::int64_t>(out, t.cols);
        out.write(reinterpret_cast<const char*>(t.data), static_cast<std::streamsize>(sizeof(double) * t.values().size()));
    }
    if (!out) throw RuntimeAbort("failed writing " + path.string());
}

void load_tensors(const std::filesystem::path& path, std::span<const TensorRef> tensors) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw RuntimeAbort("cannot open " + path.string());
    char magic[sizeof kMagic];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
        throw RuntimeAbort("not a tensor file: " + path.string());
    }
    const auto count = get<std::uint32_t>(in, path);
    if (count != tensors.size()) {
        throw RuntimeAbort(fmt::format("{}: {} tensors, expected {}", path.string(), count, tensors.size()));
    }
    for (const auto& t : tensors) {
        std::string name(get<std::uint32_t>(in, path), '\0');
        if (!in.read(name.data(), static_cast<std::streamsize>(name.size()))) throw RuntimeAbort("truncated " + path.string());
        const auto rows = get<std::int64_t>(in, path);
        const auto cols = get<std::int64_t>(in, path);
        if (name != t.name || rows != t.rows || cols != t.cols) {
            throw RuntimeAbort(fmt::format("{}: found {} ({}x{}), expected {} ({}x{})", path.string(), name, rows, cols,
                                           t.name, t.rows, t.cols));
        }
        if (!in.read(reinterpret_cast<char*>(t.data), static_cast<std::streamsize>(sizeof(double) * t.values().size()))) {
            throw RuntimeAbort("truncated " + path.string());
        }
    }
}

void save_generator(const std::filesystem::path& dir, const std::string& stem, Generator& gen, CheckpointInfo info) {
    std::filesystem::create_directories(dir);
    save_tensors(dir / (stem + ".bin"), gen.tensors());
    info.kind = "generator";
    info.dims = {{"vocab_size", gen.dims.vocab_size}, {"hidden_dim", gen.dims.hidden_dim}, {"layers", gen.dims.layers}};
    write_manifest(dir, stem, info);
}

void save_discriminator(const std::filesystem::path& dir, const std::string& stem, Discriminator& disc,
                        CheckpointInfo info) {
    std::filesystem::create_directories(dir);
    save_tensors(dir / (stem + ".bin"), disc.tensors());
    const auto& d = disc.dims;
    info.kind = "discriminator";
    info.dims = {{"vocab_size", d.vocab_size},         {"embed_dim", d.embed_dim},
                 {"hidden_dim", d.hidden_dim},         {"noise_dim", d.noise_dim},
                 {"sim_hidden_dim", d.sim_hidden_dim}, {"feature_dim", d.feature_dim}};
    write_manifest(dir, stem, info);
}

CheckpointInfo read_checkpoint_info(const std::filesystem::path& manifest) {
    const json j = read_json(manifest);
    try {
        const int version = j.at("format_version").get<int>();
        if (version != kCheckpointFormatVersion) {
            throw RuntimeAbort(fmt::format("{}: checkpoint format {} is not supported (expected {})", manifest.string(),
                                           version, kCheckpointFormatVersion));
        }
        CheckpointInfo info;
        info.kind = j.at("kind").get<std::string>();
        info.config_hash = j.at("config_hash").get<std::string>();
        info.vocab_file = j.at("vocab_file").get<std::string>();
        info.round = j.at("round").get<std::size_t>();
        info.dims = j.at("dims").get<std::map<std::string, std::size_t>>();
        return info;
    } catch (const json::exception& e) {
        throw RuntimeAbort(fmt::format("malformed checkpoint manifest {}: {}", manifest.string(), e.what()));
    }
}

Generator load_generator(const std::filesystem::path& manifest) {
    const auto info = read_checkpoint_info(manifest);
    if (info.kind != "generator") throw RuntimeAbort(manifest.string() + " is not a generator checkpoint");
    GeneratorDims dims{.vocab_size = dim(info, "vocab_size"), .hidden_dim = dim(info, "hidden_dim"),
                       .layers = dim(info, "layers")};
    dims.validate();
    Generator gen = Generator::zeros(dims);
    load_tensors(tensor_file(manifest, read_json(manifest)), gen.tensors());
    return gen;
}

Discriminator load_discriminator(const std::filesystem::path& manifest) {
    const auto info = read_checkpoint_info(manifest);
    if (info.kind != "discriminator") throw RuntimeAbort(manifest.string() + " is not a discriminator checkpoint");
    DiscriminatorDims dims{.vocab_size = dim(info, "vocab_size"),
                           .embed_dim = dim(info, "embed_dim"),
                           .hidden_dim = dim(info, "hidden_dim"),
                           .noise_dim = dim(info, "noise_dim"),
                           .sim_hidden_dim = dim(info, "sim_hidden_dim"),
                           .feature_dim = dim(info, "feature_dim")};
    dims.validate();
    Discriminator disc = Discriminator::zeros(dims);
    load_tensors(tensor_file(manifest, read_json(manifest)), disc.tensors());
    return disc;
}

}  // namespace sqlgan
