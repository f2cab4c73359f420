#include "mrn/io.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "mrn/errors.hpp"

namespace mrn {

namespace {

void write_u8(std::ostream& os, std::uint8_t v) {
    os.put(static_cast<char>(v));
}

void write_u32(std::ostream& os, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 4);
}

void write_i32(std::ostream& os, std::int32_t v) {
    write_u32(os, static_cast<std::uint32_t>(v));
}

void write_u64(std::ostream& os, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 8);
}

void write_f64(std::ostream& os, double v) {
    write_u64(os, std::bit_cast<std::uint64_t>(v));
}

void read_exact(std::istream& is, char* buf, std::streamsize n,
                const std::string& path, const char* what) {
    is.read(buf, n);
    if (is.gcount() != n)
        throw IoError(path + ": unexpected end of file in " + what);
}

std::uint8_t read_u8(std::istream& is, const std::string& path, const char* what) {
    char b;
    read_exact(is, &b, 1, path, what);
    return static_cast<std::uint8_t>(b);
}

std::uint32_t read_u32(std::istream& is, const std::string& path, const char* what) {
    char b[4];
    read_exact(is, b, 4, path, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
        v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(b[i])) << (8 * i);
    return v;
}

std::int32_t read_i32(std::istream& is, const std::string& path, const char* what) {
    return static_cast<std::int32_t>(read_u32(is, path, what));
}

std::uint64_t read_u64(std::istream& is, const std::string& path, const char* what) {
    char b[8];
    read_exact(is, b, 8, path, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(b[i])) << (8 * i);
    return v;
}

double read_f64(std::istream& is, const std::string& path, const char* what) {
    return std::bit_cast<double>(read_u64(is, path, what));
}

void expect_magic(std::istream& is, const char* magic, const std::string& path) {
    char b[4];
    read_exact(is, b, 4, path, "magic");
    if (std::string(b, 4) != magic)
        throw IoError(path + ": not a " + magic + " file");
}

void expect_eof(std::istream& is, const std::string& path) {
    is.peek();
    if (!is.eof()) throw IoError(path + ": trailing data after payload");
}

std::ofstream open_for_write(const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    return os;
}

std::ifstream open_for_read(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "'");
    return is;
}

void finish_write(std::ofstream& os, const std::string& path) {
    os.flush();
    if (!os) throw IoError("failed writing '" + path + "'");
}

std::uint32_t enum_tag(std::istream& is, const std::string& path, const char* what,
                       std::uint32_t limit) {
    const std::uint32_t v = read_u32(is, path, what);
    if (v > limit)
        throw IoError(path + ": bad " + what + " tag " + std::to_string(v));
    return v;
}

constexpr std::uint32_t kMaxNameLength = 4096;
constexpr std::uint32_t kMaxRank = 8;

}  // namespace

void save_function(const MultiResFunction& f, const std::string& path) {
    f.check_consistent();
    std::ofstream os = open_for_write(path);
    os.write("MRF1", 4);
    write_u32(os, static_cast<std::uint32_t>(f.domain));
    write_u32(os, static_cast<std::uint32_t>(f.resolution));
    write_u32(os, static_cast<std::uint32_t>(f.channels));
    write_u32(os, static_cast<std::uint32_t>(f.basis));
    write_u64(os, static_cast<std::uint64_t>(f.coeffs.size()));
    for (Eigen::Index k = 0; k < f.coeffs.size(); ++k) write_f64(os, f.coeffs[k]);
    finish_write(os, path);
}

MultiResFunction load_function(const std::string& path) {
    std::ifstream is = open_for_read(path);
    expect_magic(is, "MRF1", path);
    const std::uint32_t domain = enum_tag(is, path, "domain", 3);
    const std::uint32_t resolution = read_u32(is, path, "resolution");
    const std::uint32_t channels = read_u32(is, path, "channels");
    const std::uint32_t basis = enum_tag(is, path, "basis", 2);
    MultiResFunction f;
    try {
        f = MultiResFunction::zeros(static_cast<Domain>(domain),
                                    static_cast<int>(resolution),
                                    static_cast<int>(channels),
                                    static_cast<Basis>(basis));
    } catch (const std::runtime_error& e) {
        throw IoError(path + ": " + e.what());
    }
    const std::uint64_t count = read_u64(is, path, "coefficient count");
    if (count != static_cast<std::uint64_t>(f.coeffs.size()))
        throw IoError(path + ": coefficient count " + std::to_string(count) +
                      " does not match the header (" +
                      std::to_string(f.coeffs.size()) + " expected)");
    for (Eigen::Index k = 0; k < f.coeffs.size(); ++k)
        f.coeffs[k] = read_f64(is, path, "coefficients");
    expect_eof(is, path);
    return f;
}

void save_state(const UNetState& state, const std::string& path) {
    validate_unet_spec(state.spec);
    std::ofstream os = open_for_write(path);
    os.write("UNS1", 4);
    const UNetSpec& s = state.spec;
    write_u32(os, static_cast<std::uint32_t>(s.domain));
    write_i32(os, s.levels);
    write_i32(os, s.finest_resolution);
    write_i32(os, s.coarsest_resolution);
    write_i32(os, s.channels);
    write_i32(os, s.hidden_base);
    write_u32(os, static_cast<std::uint32_t>(s.projection));
    write_u32(os, static_cast<std::uint32_t>(s.bottleneck));
    write_u32(os, static_cast<std::uint32_t>(s.skip_mode));
    write_u8(os, s.multi_subspace ? 1 : 0);
    write_u32(os, static_cast<std::uint32_t>(s.encoder_kinds.size()));
    for (EncoderKind k : s.encoder_kinds) write_u32(os, static_cast<std::uint32_t>(k));
    write_u32(os, static_cast<std::uint32_t>(state.frozen.size()));
    for (std::uint8_t flag : state.frozen) write_u8(os, flag);
    write_u32(os, static_cast<std::uint32_t>(state.params.size()));
    for (const ParamSlot& slot : state.params) {
        write_u32(os, static_cast<std::uint32_t>(slot.name.size()));
        os.write(slot.name.data(),
                 static_cast<std::streamsize>(slot.name.size()));
        write_i32(os, slot.level);
        write_u32(os, static_cast<std::uint32_t>(slot.tensor.shape.size()));
        for (int d : slot.tensor.shape) write_i32(os, d);
        write_u64(os, static_cast<std::uint64_t>(slot.tensor.data.size()));
        for (Eigen::Index k = 0; k < slot.tensor.data.size(); ++k)
            write_f64(os, slot.tensor.data[k]);
    }
    finish_write(os, path);
}

UNetState load_state(const std::string& path) {
    std::ifstream is = open_for_read(path);
    expect_magic(is, "UNS1", path);
    UNetState state;
    UNetSpec& s = state.spec;
    s.domain = static_cast<Domain>(enum_tag(is, path, "domain", 3));
    s.levels = read_i32(is, path, "levels");
    s.finest_resolution = read_i32(is, path, "finest resolution");
    s.coarsest_resolution = read_i32(is, path, "coarsest resolution");
    s.channels = read_i32(is, path, "channels");
    s.hidden_base = read_i32(is, path, "hidden base");
    s.projection = static_cast<ProjectionOp::Kind>(enum_tag(is, path, "projection", 1));
    s.bottleneck = static_cast<BottleneckKind>(enum_tag(is, path, "bottleneck", 1));
    s.skip_mode = static_cast<SkipMode>(enum_tag(is, path, "skip mode", 1));
    s.multi_subspace = read_u8(is, path, "subspace flag") != 0;
    const std::uint32_t kinds = read_u32(is, path, "encoder kind count");
    if (kinds > 1024) throw IoError(path + ": implausible encoder kind count");
    s.encoder_kinds.reserve(kinds);
    for (std::uint32_t k = 0; k < kinds; ++k)
        s.encoder_kinds.push_back(
            static_cast<EncoderKind>(enum_tag(is, path, "encoder kind", 1)));
    try {
        validate_unet_spec(s);
    } catch (const std::runtime_error& e) {
        throw IoError(path + ": " + e.what());
    }
    const std::uint32_t flags = read_u32(is, path, "freeze flag count");
    if (flags > 1024) throw IoError(path + ": implausible freeze flag count");
    state.frozen.reserve(flags);
    for (std::uint32_t k = 0; k < flags; ++k)
        state.frozen.push_back(read_u8(is, path, "freeze flags"));
    const std::uint32_t slots = read_u32(is, path, "parameter count");
    state.params.reserve(slots);
    for (std::uint32_t k = 0; k < slots; ++k) {
        ParamSlot slot;
        const std::uint32_t name_len = read_u32(is, path, "name length");
        if (name_len > kMaxNameLength)
            throw IoError(path + ": implausible parameter name length " +
                          std::to_string(name_len));
        slot.name.resize(name_len);
        read_exact(is, slot.name.data(), name_len, path, "parameter name");
        slot.level = read_i32(is, path, "parameter level");
        if (slot.level < 0 || slot.level > s.levels)
            throw IoError(path + ": parameter '" + slot.name + "' has level " +
                          std::to_string(slot.level) + " outside 0.." +
                          std::to_string(s.levels));
        const std::uint32_t rank = read_u32(is, path, "tensor rank");
        if (rank > kMaxRank)
            throw IoError(path + ": implausible tensor rank " + std::to_string(rank));
        std::vector<int> shape(rank);
        for (std::uint32_t d = 0; d < rank; ++d)
            shape[d] = read_i32(is, path, "tensor shape");
        const std::uint64_t count = read_u64(is, path, "tensor size");
        Eigen::Index expected = 0;
        try {
            expected = Tensor::numel(shape);
        } catch (const std::runtime_error& e) {
            throw IoError(path + ": " + e.what());
        }
        if (count != static_cast<std::uint64_t>(expected))
            throw IoError(path + ": tensor '" + slot.name + "' size " +
                          std::to_string(count) + " does not match its shape");
        Tensor::Array data(static_cast<Eigen::Index>(count));
        for (Eigen::Index v = 0; v < data.size(); ++v)
            data[v] = read_f64(is, path, "tensor values");
        slot.tensor = Tensor(std::move(shape), std::move(data));
        state.params.push_back(std::move(slot));
    }
    expect_eof(is, path);
    return state;
}

std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string csv_text(const CsvTable& table) {
    auto check_cell = [](const std::string& cell) {
        if (cell.find_first_of(",\"\n\r") != std::string::npos)
            throw ValueError("csv cell '" + cell + "' needs quoting, which this "
                             "writer does not do");
        return cell;
    };
    std::string out;
    auto append_row = [&](const std::vector<std::string>& row) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c > 0) out += ',';
            out += check_cell(row[c]);
        }
        out += '\n';
    };
    append_row(table.header);
    for (const auto& row : table.rows) {
        if (row.size() != table.header.size())
            throw ValueError("csv row has " + std::to_string(row.size()) +
                             " cells, header has " + std::to_string(table.header.size()));
        append_row(row);
    }
    return out;
}

void save_text(const std::string& text, const std::string& path) {
    std::ofstream os = open_for_write(path);
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    finish_write(os, path);
}

void save_csv(const CsvTable& table, const std::string& path) {
    save_text(csv_text(table), path);
}

std::string to_json(const SpectrumReport& rep) {
    nlohmann::json bands = nlohmann::json::array();
    for (const SpectrumBand& band : rep.bands)
        bands.push_back({{"band", band.band},
                         {"variance", band.variance},
                         {"ratio", band.ratio},
                         {"ci", band.half_width}});
    const nlohmann::json doc = {{"resolution", rep.resolution},
                                {"t", rep.t},
                                {"samples", rep.samples},
                                {"bands", bands}};
    return doc.dump(2) + "\n";
}

std::string to_json(const ConsistencyReport& rep) {
    const nlohmann::json doc = {
        {"fine_resolution", rep.fine_resolution},
        {"coarse_resolution", rep.coarse_resolution},
        {"t", rep.t},
        {"samples", rep.samples},
        {"max_mean_discrepancy", rep.max_mean_discrepancy},
        {"max_mean_discrepancy_se", rep.max_mean_discrepancy_se},
        {"pooled_variance", rep.pooled_variance},
        {"direct_variance", rep.direct_variance},
        {"variance_ratio", rep.variance_ratio}};
    return doc.dump(2) + "\n";
}

CsvTable spectrum_csv(const SpectrumReport& rep) {
    CsvTable table;
    table.header = {"band", "variance", "ratio", "ci"};
    for (const SpectrumBand& band : rep.bands)
        table.rows.push_back({std::to_string(band.band), format_double(band.variance),
                              format_double(band.ratio), format_double(band.half_width)});
    return table;
}

CsvTable consistency_csv(const ConsistencyReport& rep) {
    CsvTable table;
    table.header = {"metric", "value"};
    table.rows = {
        {"fine_resolution", std::to_string(rep.fine_resolution)},
        {"coarse_resolution", std::to_string(rep.coarse_resolution)},
        {"t", format_double(rep.t)},
        {"samples", std::to_string(rep.samples)},
        {"max_mean_discrepancy", format_double(rep.max_mean_discrepancy)},
        {"max_mean_discrepancy_se", format_double(rep.max_mean_discrepancy_se)},
        {"pooled_variance", format_double(rep.pooled_variance)},
        {"direct_variance", format_double(rep.direct_variance)},
        {"variance_ratio", format_double(rep.variance_ratio)},
    };
    return table;
}

CsvTable loss_table_csv(const std::vector<ConditionalLoss>& table) {
    CsvTable out;
    out.header = {"target_resolution", "input_resolution", "loss"};
    for (const ConditionalLoss& row : table)
        out.rows.push_back({std::to_string(row.target_resolution),
                            std::to_string(row.input_resolution),
                            format_double(row.loss)});
    return out;
}

CsvTable trace_csv(const std::vector<std::vector<double>>& stage_traces) {
    CsvTable out;
    out.header = {"stage", "step", "loss"};
    for (std::size_t s = 0; s < stage_traces.size(); ++s)
        for (std::size_t k = 0; k < stage_traces[s].size(); ++k)
            out.rows.push_back({std::to_string(s + 1), std::to_string(k),
                                format_double(stage_traces[s][k])});
    return out;
}

}  // namespace mrn
