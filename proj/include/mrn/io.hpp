#pragma once

#include <string>
#include <vector>

#include "mrn/diffusion.hpp"
#include "mrn/spaces.hpp"
#include "mrn/training.hpp"
#include "mrn/unet.hpp"

namespace mrn {

// --- Binary artifacts -----------------------------------------------------

// Function file (.mrf): "MRF1", four u32 header words (domain, resolution,
// channels, basis), a u64 coefficient count, then the coefficients as f64.
// Everything little-endian; values round-trip bit for bit.
void save_function(const MultiResFunction& f, const std::string& path);
MultiResFunction load_function(const std::string& path);

// Net file (.uns): "UNS1", the architecture fields, the per-level freeze
// flags, then every parameter slot as (name, level, shape, values). Also
// little-endian and bit-exact; the loader re-validates the architecture and
// every tensor shape before accepting the file.
void save_state(const UNetState& state, const std::string& path);
UNetState load_state(const std::string& path);

// --- Text artifacts -------------------------------------------------------

// Shortest decimal form that parses back to exactly the same double, so
// reruns producing identical values emit identical bytes.
std::string format_double(double v);

// Comma-separated table with one header line and \n endings. Cells must not
// contain commas, quotes, or line breaks; numeric cells should come from
// format_double.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

std::string csv_text(const CsvTable& table);
void save_csv(const CsvTable& table, const std::string& path);
void save_text(const std::string& text, const std::string& path);

// --- Report payloads ------------------------------------------------------

// JSON with sorted keys and round-trip number formatting: equal records
// serialize to equal bytes. Spectrum band entries carry (band, variance,
// ratio, ci).
std::string to_json(const SpectrumReport& rep);
std::string to_json(const ConsistencyReport& rep);

// CSV mirrors of the same records, one row per band or per statistic.
CsvTable spectrum_csv(const SpectrumReport& rep);
CsvTable consistency_csv(const ConsistencyReport& rep);

// One row per (target resolution, input resolution) pair of an oracle-loss
// sweep.
CsvTable loss_table_csv(const std::vector<ConditionalLoss>& table);

// Long-form training traces: one row per (stage, step) holding the loss
// before that step; the final row of each stage holds the closing loss.
CsvTable trace_csv(const std::vector<std::vector<double>>& stage_traces);

}  // namespace mrn
