#include "rdg/checkpoint.hpp"

#include <cstring>
#include <sstream>
#include <vector>

namespace rdg::ckpt {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'R', 'D', 'G', 'C', 'K', 'P', 'T', '\n'};

std::string dtype_name(torch::ScalarType t) {
    switch (t) {
        case torch::kFloat32: return "f32";
        case torch::kFloat64: return "f64";
        case torch::kInt64: return "i64";
        case torch::kInt32: return "i32";
        case torch::kUInt8: return "u8";
        case torch::kBool: return "b8";
        default: throw FormatError("unsupported checkpoint tensor dtype");
    }
}

torch::ScalarType dtype_from_name(const std::string& s) {
    if (s == "f32") return torch::kFloat32;
    if (s == "f64") return torch::kFloat64;
    if (s == "i64") return torch::kInt64;
    if (s == "i32") return torch::kInt32;
    if (s == "u8") return torch::kUInt8;
    if (s == "b8") return torch::kBool;
    throw FormatError("unknown checkpoint tensor dtype: " + s);
}

void append_u32(std::string& out, std::uint32_t v) {
    char buf[4];
    std::memcpy(buf, &v, 4);
    out.append(buf, 4);
}

void append_u64(std::string& out, std::uint64_t v) {
    char buf[8];
    std::memcpy(buf, &v, 8);
    out.append(buf, 8);
}

}  // namespace

void Archive::save(const fs::path& path) const {
    json index;
    index["kind"] = kind;
    index["meta"] = meta;

    std::string payload;
    json tensor_index = json::array();
    for (const auto& [name, t] : tensors) {
        auto c = t.detach().contiguous().cpu();
        const std::size_t nbytes = static_cast<std::size_t>(c.numel()) * c.element_size();
        tensor_index.push_back({{"name", name},
                                {"dtype", dtype_name(c.scalar_type())},
                                {"shape", c.sizes().vec()},
                                {"offset", payload.size()},
                                {"nbytes", nbytes}});
        payload.append(static_cast<const char*>(c.data_ptr()), nbytes);
    }
    json blob_index = json::array();
    for (const auto& [name, data] : blobs) {
        blob_index.push_back({{"name", name}, {"offset", payload.size()}, {"nbytes", data.size()}});
        payload.append(data);
    }
    index["tensors"] = tensor_index;
    index["blobs"] = blob_index;

    std::string header = index.dump();
    std::string out;
    out.reserve(sizeof(kMagic) + 12 + header.size() + payload.size());
    out.append(kMagic, sizeof(kMagic));
    append_u32(out, kVersion);
    append_u64(out, header.size());
    out += header;
    out += payload;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_file_atomic(path, out);
}

Archive Archive::load(const fs::path& path) {
    const std::string raw = read_file(path);
    if (raw.size() < sizeof(kMagic) + 12 || std::memcmp(raw.data(), kMagic, sizeof(kMagic)) != 0)
        throw FormatError("not a checkpoint file: " + path.string());
    std::uint32_t version;
    std::memcpy(&version, raw.data() + sizeof(kMagic), 4);
    if (version != kVersion)
        throw FormatError("checkpoint version mismatch: file has " + std::to_string(version) +
                          ", reader supports " + std::to_string(kVersion));
    std::uint64_t header_len;
    std::memcpy(&header_len, raw.data() + sizeof(kMagic) + 4, 8);
    const std::size_t header_start = sizeof(kMagic) + 12;
    if (header_start + header_len > raw.size())
        throw FormatError("truncated checkpoint header: " + path.string());

    json index;
    try {
        index = json::parse(raw.substr(header_start, header_len));
    } catch (const json::exception& e) {
        throw FormatError(std::string("corrupt checkpoint index: ") + e.what());
    }

    Archive a;
    const std::size_t payload_start = header_start + header_len;
    try {
        a.kind = index.at("kind").get<std::string>();
        a.meta = index.at("meta");
        for (const auto& entry : index.at("tensors")) {
            const std::string name = entry.at("name").get<std::string>();
            const auto dtype = dtype_from_name(entry.at("dtype").get<std::string>());
            const auto shape = entry.at("shape").get<std::vector<std::int64_t>>();
            const std::size_t offset = entry.at("offset").get<std::size_t>();
            const std::size_t nbytes = entry.at("nbytes").get<std::size_t>();
            if (payload_start + offset + nbytes > raw.size())
                throw FormatError("truncated checkpoint payload: " + path.string());
            auto t = torch::empty(shape, dtype);
            if (static_cast<std::size_t>(t.numel()) * t.element_size() != nbytes)
                throw FormatError("checkpoint tensor size mismatch for " + name);
            std::memcpy(t.data_ptr(), raw.data() + payload_start + offset, nbytes);
            a.tensors.emplace(name, std::move(t));
        }
        for (const auto& entry : index.at("blobs")) {
            const std::string name = entry.at("name").get<std::string>();
            const std::size_t offset = entry.at("offset").get<std::size_t>();
            const std::size_t nbytes = entry.at("nbytes").get<std::size_t>();
            if (payload_start + offset + nbytes > raw.size())
                throw FormatError("truncated checkpoint payload: " + path.string());
            a.blobs.emplace(name, raw.substr(payload_start + offset, nbytes));
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("corrupt checkpoint index: ") + e.what());
    }
    return a;
}

void Archive::put_module(const std::string& prefix, const torch::nn::Module& m) {
    for (const auto& item : m.named_parameters(/*recurse=*/true))
        tensors[prefix + "." + item.key()] = item.value().detach().clone();
    for (const auto& item : m.named_buffers(/*recurse=*/true))
        tensors[prefix + "." + item.key()] = item.value().detach().clone();
}

void Archive::get_module(const std::string& prefix, torch::nn::Module& m) const {
    torch::NoGradGuard ng;
    auto restore = [&](const std::string& key, torch::Tensor value) {
        auto it = tensors.find(prefix + "." + key);
        if (it == tensors.end())
            throw FormatError("checkpoint missing tensor " + prefix + "." + key);
        if (!it->second.sizes().equals(value.sizes()))
            throw FormatError("checkpoint shape mismatch for " + prefix + "." + key);
        value.copy_(it->second);
    };
    for (const auto& item : m.named_parameters(/*recurse=*/true)) restore(item.key(), item.value());
    for (const auto& item : m.named_buffers(/*recurse=*/true)) restore(item.key(), item.value());
}

void Archive::put_optimizer(const std::string& name, const torch::optim::Optimizer& opt) {
    std::ostringstream stream;
    torch::serialize::OutputArchive out;
    const_cast<torch::optim::Optimizer&>(opt).save(out);
    out.save_to(stream);
    blobs[name] = stream.str();
}

bool Archive::get_optimizer(const std::string& name, torch::optim::Optimizer& opt) const {
    auto it = blobs.find(name);
    if (it == blobs.end()) return false;
    std::istringstream stream(it->second);
    torch::serialize::InputArchive in;
    in.load_from(stream);
    opt.load(in);
    return true;
}

}  // namespace rdg::ckpt
