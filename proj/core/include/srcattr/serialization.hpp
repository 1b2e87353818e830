#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "srcattr/adaptation.hpp"
#include "srcattr/attributor.hpp"
#include "srcattr/embedder.hpp"

namespace srcattr {

/// Versioned JSON snapshot of embedder parameters: layer sizes plus
/// row-major weight arrays. Round-trips exactly (shortest-round-trip
/// double encoding).
void save_embedder(const std::filesystem::path& path, const EmbedderParams& params);
EmbedderParams load_embedder(const std::filesystem::path& path);

/// Versioned JSON snapshot of the source-model bank and threshold.
void save_attributor(const std::filesystem::path& path, const AttributorState& state);
AttributorState load_attributor(const std::filesystem::path& path);

/// Writes a state snapshot directory:
///   meta.json        step, sources, pending flags
///   embedder.json    encoder/decoder parameters
///   attributor.json  model bank and threshold
///   train.csv        train ledger (dataset CSV schema)
///   val.csv          val ledger
///   buffer.csv       embedding coordinates plus arrival step
///   embeddings.csv   re-embedded ledgers with labels, for projection
void save_state(const std::filesystem::path& dir, const SystemState& state);
SystemState load_state(const std::filesystem::path& dir);

/// Canonical byte encoding of the full state; basis of state_fingerprint.
std::string serialize_state_canonical(const SystemState& state);

/// Appends one report per line to a JSON-lines audit log. Wall-clock
/// duration is deliberately omitted so identical runs produce identical
/// files.
void append_audit(const std::filesystem::path& path, const UpdateReport& report);

}  // namespace srcattr
