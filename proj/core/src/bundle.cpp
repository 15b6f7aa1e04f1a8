#include "s2s/bundle.hpp"

#include <json.hpp>
#include <zlib.h>

#include <bit>
#include <fstream>
#include <string>

namespace s2s {
namespace {

using json = nlohmann::ordered_json;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[at + i]) << (8 * i);
    return v;
}

std::uint32_t crc_of(std::span<const std::uint8_t> header, std::span<const std::uint8_t> payload) {
    // zlib treats a null buffer as a request for the initial value, so skip empty spans.
    uLong crc = ::crc32(0L, Z_NULL, 0);
    for (auto part : {header, payload})
        if (!part.empty()) crc = ::crc32(crc, part.data(), static_cast<uInt>(part.size()));
    return static_cast<std::uint32_t>(crc);
}

std::size_t as_count(const json& header, const char* key) {
    auto it = header.find(key);
    if (it == header.end() || !it->is_number_unsigned())
        fail(ErrorKind::format, std::string("bundle header field '") + key + "' missing or not a count");
    return it->get<std::size_t>();
}

} // namespace

std::uint32_t crc32(std::span<const std::uint8_t> bytes) { return crc_of(bytes, {}); }

std::vector<std::uint8_t> serialize_bundle(const ModelParams& m, const Vocab& vocab) {
    validate(m);
    if (vocab.size() != m.hyper.vocab_size) fail(ErrorKind::config, "vocabulary size does not match the model");

    json header;
    header["format_version"] = bundle_format_version;
    header["V"] = m.hyper.vocab_size;
    header["d"] = m.hyper.embed_dim;
    header["h"] = m.hyper.hidden_dim;
    header["max_seq_len"] = m.hyper.max_seq_len;
    header["gate_order"] = "ifgo";
    header["layout"] = "row-major";
    header["dtype"] = "float32-le";
    json manifest = json::array();
    std::size_t offset = 0;
    m.visit([&](std::string_view name, const Tensor2& t) {
        manifest.push_back({{"name", name}, {"rows", t.rows()}, {"cols", t.cols()}, {"offset", offset}});
        offset += t.size() * 4;
    });
    header["tensors"] = std::move(manifest);
    header["vocab"] = vocab.tokens();
    const std::string header_text = header.dump();

    std::vector<std::uint8_t> out;
    out.reserve(8 + header_text.size() + offset + 4);
    out.insert(out.end(), bundle_magic.begin(), bundle_magic.end());
    put_u32(out, static_cast<std::uint32_t>(header_text.size()));
    out.insert(out.end(), header_text.begin(), header_text.end());
    const std::size_t payload_start = out.size();
    m.visit([&](std::string_view, const Tensor2& t) {
        for (float v : t.values()) put_u32(out, std::bit_cast<std::uint32_t>(v));
    });
    const std::span<const std::uint8_t> all(out);
    put_u32(out, crc_of(all.subspan(8, header_text.size()), all.subspan(payload_start)));
    return out;
}

LoadedModel deserialize_bundle(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 12 || !std::equal(bundle_magic.begin(), bundle_magic.end(), bytes.begin()))
        fail(ErrorKind::format, "not a model bundle (bad magic)");
    const std::size_t header_len = get_u32(bytes, 4);
    if (header_len > bytes.size() - 12) fail(ErrorKind::corruption, "bundle truncated: header length exceeds file");
    const auto header_bytes = bytes.subspan(8, header_len);
    const auto payload = bytes.subspan(8 + header_len, bytes.size() - 12 - header_len);
    const bool crc_ok = crc_of(header_bytes, payload) == get_u32(bytes, bytes.size() - 4);

    const json header = json::parse(header_bytes.begin(), header_bytes.end(), nullptr, false);
    if (header.is_discarded() || !header.is_object()) {
        if (!crc_ok) fail(ErrorKind::corruption, "bundle checksum mismatch");
        fail(ErrorKind::format, "bundle header is not a JSON object");
    }
    const std::size_t version = as_count(header, "format_version");
    if (version != bundle_format_version)
        fail(ErrorKind::unsupported_version, "unsupported version " + std::to_string(version) + " (expected " +
                                                 std::to_string(bundle_format_version) + ")");
    if (!crc_ok) fail(ErrorKind::corruption, "bundle checksum mismatch");

    Hyper hyper{as_count(header, "V"), as_count(header, "d"), as_count(header, "h"), as_count(header, "max_seq_len")};
    if (header.value("gate_order", "") != "ifgo") fail(ErrorKind::format, "unsupported gate order");
    if (header.value("layout", "") != "row-major") fail(ErrorKind::format, "unsupported tensor layout");

    auto vocab_it = header.find("vocab");
    if (vocab_it == header.end() || !vocab_it->is_array()) fail(ErrorKind::format, "bundle has no vocabulary");
    std::vector<std::string> tokens;
    for (const auto& t : *vocab_it) {
        if (!t.is_string()) fail(ErrorKind::format, "vocabulary entries must be strings");
        tokens.push_back(t.get<std::string>());
    }
    Vocab vocab = Vocab::from_tokens(std::move(tokens));
    if (vocab.size() != hyper.vocab_size) fail(ErrorKind::format, "vocabulary length does not match V");

    auto manifest = header.find("tensors");
    if (manifest == header.end() || !manifest->is_array() || manifest->size() != tensor_names.size())
        fail(ErrorKind::format, "tensor manifest must list " + std::to_string(tensor_names.size()) + " tensors");

    // Tensors are rebuilt from the manifest alone, then checked against the hyperparameters.
    auto params = ModelParams::zeros(hyper);
    std::vector<Tensor2*> slots;
    params.visit([&](std::string_view, Tensor2& t) { slots.push_back(&t); });
    std::size_t expected_offset = 0;
    for (std::size_t k = 0; k < tensor_names.size(); ++k) {
        const json& entry = (*manifest)[k];
        if (!entry.is_object() || entry.value("name", "") != tensor_names[k])
            fail(ErrorKind::format, "manifest entry " + std::to_string(k) + " should be " + std::string(tensor_names[k]));
        const std::size_t rows = as_count(entry, "rows"), cols = as_count(entry, "cols"),
                          offset = as_count(entry, "offset");
        if (offset != expected_offset)
            fail(ErrorKind::format, std::string(tensor_names[k]) + " offset " + std::to_string(offset) +
                                        " is not contiguous (expected " + std::to_string(expected_offset) + ")");
        const std::size_t n_bytes = rows * cols * 4;
        if (offset + n_bytes > payload.size())
            fail(ErrorKind::format, std::string(tensor_names[k]) + " extends past the payload");
        std::vector<float> data(rows * cols);
        for (std::size_t i = 0; i < data.size(); ++i)
            data[i] = std::bit_cast<float>(get_u32(payload, offset + 4 * i));
        Tensor2 t(rows, cols, std::move(data));
        if (t.rows() != slots[k]->rows() || t.cols() != slots[k]->cols())
            fail(ErrorKind::format, std::string(tensor_names[k]) + " has shape " + t.shape() + ", header implies " +
                                        slots[k]->shape());
        *slots[k] = std::move(t);
        expected_offset += n_bytes;
    }
    if (expected_offset != payload.size())
        fail(ErrorKind::format, "payload holds " + std::to_string(payload.size()) + " bytes, manifest describes " +
                                    std::to_string(expected_offset));
    validate(params);
    return {std::move(params), std::move(vocab)};
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot read " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorKind::io, "cannot write " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) fail(ErrorKind::io, "write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) fail(ErrorKind::io, "cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

void export_model(const ModelParams& m, const Vocab& vocab, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_bundle(m, vocab));
}

LoadedModel import_model(const std::filesystem::path& path) { return deserialize_bundle(read_file_bytes(path)); }

} // namespace s2s
