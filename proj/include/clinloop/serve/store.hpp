#pragma once

#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>

#include "clinloop/serve/packet.hpp"

namespace clinloop::serve {

// Append-only inference store: one JSON record per line, record kinds
// {packet, label_update}. Crash-safe at record granularity — a torn final
// line is detected and dropped on read; a corrupt interior record fails
// loudly with its line number. Reads merge label updates over base packets.
class PacketStore {
 public:
  explicit PacketStore(std::filesystem::path file);

  void append_packet(const InferencePacket& packet);
  void append_label_update(const LabelUpdate& update);

  struct ReadResult {
    std::vector<InferencePacket> packets;  // append order, labels merged
    std::vector<LabelUpdate> updates;      // raw update records, file order
    bool dropped_torn_tail = false;
  };

  struct Filter {
    std::optional<std::string> model_id;
    std::optional<Timestamp> from_time;  // inclusive
    std::optional<Timestamp> to_time;    // exclusive
  };

  ReadResult read(const Filter& filter = {}) const;

  const std::filesystem::path& path() const { return path_; }

 private:
  void append_line(const std::string& line);

  std::filesystem::path path_;
  std::ofstream out_;
  mutable std::mutex write_mu_;
};

}  // namespace clinloop::serve
