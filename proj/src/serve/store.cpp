#include "clinloop/serve/store.hpp"

#include <cstdio>
#include <map>

namespace clinloop::serve {

PacketStore::PacketStore(std::filesystem::path file) : path_(std::move(file)) {
  if (path_.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path_.parent_path(), ec);
  }
  out_.open(path_, std::ios::binary | std::ios::app);
  if (!out_) throw IoError("cannot open store '" + path_.string() + "'");
}

void PacketStore::append_line(const std::string& line) {
  std::lock_guard lock(write_mu_);
  out_ << line << '\n';
  out_.flush();
  if (!out_) throw IoError("store append failed: '" + path_.string() + "'");
}

void PacketStore::append_packet(const InferencePacket& packet) {
  append_line(packet.to_json().dump());
}

void PacketStore::append_label_update(const LabelUpdate& update) {
  append_line(update.to_json().dump());
}

PacketStore::ReadResult PacketStore::read(const Filter& filter) const {
  std::ifstream in(path_, std::ios::binary);
  if (!in) throw IoError("cannot read store '" + path_.string() + "'");

  ReadResult out;
  std::map<std::string, std::size_t> by_id;

  std::string line;
  std::size_t line_no = 0;
  bool prev_line_bad = false;
  std::size_t bad_line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (prev_line_bad) {
      // A record after the damaged one means interior corruption, not a
      // torn tail.
      throw IntegrityError("store corrupt at line " +
                           std::to_string(bad_line_no) + " of '" +
                           path_.string() + "'");
    }
    nlohmann::json j;
    std::string kind;
    try {
      j = nlohmann::json::parse(line);
      kind = j.at("kind").get<std::string>();
      if (kind == "packet") {
        InferencePacket p = InferencePacket::from_json(j);
        by_id[p.packet_id] = out.packets.size();
        out.packets.push_back(std::move(p));
      } else if (kind == "label_update") {
        out.updates.push_back(LabelUpdate::from_json(j));
      } else {
        throw ValidationError("unknown record kind '" + kind + "'");
      }
    } catch (const IntegrityError&) {
      throw;
    } catch (const std::exception&) {
      prev_line_bad = true;
      bad_line_no = line_no;
    }
  }
  if (prev_line_bad) {
    out.dropped_torn_tail = true;
    std::fprintf(stderr,
                 "[store] warning: dropped torn final record at line %zu of %s\n",
                 bad_line_no, path_.string().c_str());
  }

  // Event-sourced merge; the first update for a packet wins, so replayed
  // extractions are idempotent.
  for (const auto& u : out.updates) {
    auto it = by_id.find(u.packet_id);
    if (it == by_id.end()) continue;
    InferencePacket& p = out.packets[it->second];
    if (p.label.has_value()) continue;
    p.label = u.label;
    p.label_time = u.label_time;
  }

  if (filter.model_id || filter.from_time || filter.to_time) {
    std::vector<InferencePacket> kept;
    for (auto& p : out.packets) {
      if (filter.model_id && p.model_id != *filter.model_id) continue;
      if (filter.from_time && p.inference_time < *filter.from_time) continue;
      if (filter.to_time && p.inference_time >= *filter.to_time) continue;
      kept.push_back(std::move(p));
    }
    out.packets = std::move(kept);
  }
  return out;
}

}  // namespace clinloop::serve
