#include "dpt/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dpt {

namespace {

constexpr char kMagic[4] = {'D', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u16(std::string& out, std::uint16_t v) {
    for (int i = 0; i < 2; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct Reader {
    std::istream& in;
    std::uint64_t take_bytes(char* dst, std::size_t n) {
        in.read(dst, static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in.gcount()) != n) {
            throw std::runtime_error("checkpoint: truncated file");
        }
        return n;
    }
    std::uint16_t u16() { return static_cast<std::uint16_t>(uint_le(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(uint_le(4)); }
    std::uint64_t u64() { return uint_le(8); }
    std::uint64_t uint_le(int bytes) {
        unsigned char buf[8];
        take_bytes(reinterpret_cast<char*>(buf), static_cast<std::size_t>(bytes));
        std::uint64_t v = 0;
        for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
        return v;
    }
    std::string bytes(std::size_t n) {
        std::string s(n, '\0');
        take_bytes(s.data(), n);
        return s;
    }
};

std::string format_hash(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string build_metadata(const Checkpoint& ckpt) {
    std::ostringstream meta;
    meta << "stage " << ckpt.stage << '\n';
    meta << "config_hash " << format_hash(ckpt.config_hash) << '\n';
    meta << "seed " << ckpt.seed << '\n';
    meta << "denoised " << (ckpt.denoised_ref.empty() ? "-" : ckpt.denoised_ref) << '\n';
    meta << "prompt_variant " << (ckpt.prompt_variant.empty() ? "-" : ckpt.prompt_variant)
         << '\n';
    meta << "loss_trace";
    char buf[40];
    for (double v : ckpt.loss_trace) {
        std::snprintf(buf, sizeof buf, " %.17g", v);
        meta << buf;
    }
    meta << '\n';
    return meta.str();
}

void parse_metadata(const std::string& text, Checkpoint& ckpt) {
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        std::istringstream fields(line);
        std::string key;
        fields >> key;
        if (key == "stage") {
            fields >> ckpt.stage;
        } else if (key == "config_hash") {
            std::string hex;
            fields >> hex;
            ckpt.config_hash = std::stoull(hex, nullptr, 16);
        } else if (key == "seed") {
            fields >> ckpt.seed;
        } else if (key == "denoised") {
            fields >> ckpt.denoised_ref;
        } else if (key == "prompt_variant") {
            fields >> ckpt.prompt_variant;
        } else if (key == "loss_trace") {
            double v = 0.0;
            while (fields >> v) ckpt.loss_trace.push_back(v);
        }
        // Unknown keys are skipped so older readers tolerate added fields.
    }
}

} // namespace

void write_checkpoint(const Checkpoint& ckpt, const std::string& path, bool use_f32) {
    std::string manifest;
    std::string data;
    std::uint32_t count = 0;
    for (const auto& [name, param] : ckpt.params) {
        if (name.size() > 0xffff) throw std::invalid_argument("checkpoint: name too long");
        put_u16(manifest, static_cast<std::uint16_t>(name.size()));
        manifest += name;
        manifest.push_back(2); // ndim
        put_u64(manifest, param.value.rows);
        put_u64(manifest, param.value.cols);
        manifest.push_back(use_f32 ? 0 : 1);
        manifest.push_back(param.frozen ? 1 : 0);
        put_u64(manifest, data.size());
        for (double v : param.value.data) {
            if (use_f32) {
                put_u32(data, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
            } else {
                put_u64(data, std::bit_cast<std::uint64_t>(v));
            }
        }
        ++count;
    }
    const std::string meta = build_metadata(ckpt);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    std::string head;
    head.append(kMagic, 4);
    put_u32(head, kVersion);
    put_u64(head, meta.size());
    head += meta;
    put_u32(head, count);
    head += manifest;
    put_u64(head, data.size());
    out.write(head.data(), static_cast<std::streamsize>(head.size()));
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    Reader r{in};
    char magic[4];
    r.take_bytes(magic, 4);
    if (std::string(magic, 4) != std::string(kMagic, 4)) {
        throw std::runtime_error("checkpoint: bad magic in " + path);
    }
    const std::uint32_t version = r.u32();
    if (version != kVersion) {
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    }
    Checkpoint ckpt;
    const std::uint64_t meta_len = r.u64();
    parse_metadata(r.bytes(meta_len), ckpt);

    struct Entry {
        std::string name;
        std::uint64_t rows, cols, offset;
        bool f64, frozen;
    };
    const std::uint32_t count = r.u32();
    std::vector<Entry> entries;
    entries.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        Entry e;
        e.name = r.bytes(r.u16());
        const auto ndim = static_cast<int>(r.bytes(1)[0]);
        if (ndim != 2) throw std::runtime_error("checkpoint: unexpected rank");
        e.rows = r.u64();
        e.cols = r.u64();
        e.f64 = r.bytes(1)[0] != 0;
        e.frozen = r.bytes(1)[0] != 0;
        e.offset = r.u64();
        entries.push_back(std::move(e));
    }
    const std::uint64_t data_len = r.u64();
    const std::string data = r.bytes(data_len);
    for (const auto& e : entries) {
        const std::uint64_t width = e.f64 ? 8 : 4;
        const std::uint64_t need = e.rows * e.cols * width;
        if (e.offset + need > data_len) {
            throw std::runtime_error("checkpoint: array '" + e.name + "' overruns data section");
        }
        Parameter& p = ckpt.params.create(e.name, e.rows, e.cols);
        p.frozen = e.frozen;
        const auto* base = reinterpret_cast<const unsigned char*>(data.data()) + e.offset;
        for (std::size_t i = 0; i < p.value.data.size(); ++i) {
            std::uint64_t bits = 0;
            for (std::uint64_t bidx = 0; bidx < width; ++bidx) {
                bits |= static_cast<std::uint64_t>(base[i * width + bidx]) << (8 * bidx);
            }
            p.value.data[i] = e.f64
                                  ? std::bit_cast<double>(bits)
                                  : static_cast<double>(
                                        std::bit_cast<float>(static_cast<std::uint32_t>(bits)));
        }
    }
    return ckpt;
}

} // namespace dpt
