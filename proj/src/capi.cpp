#include "packgen/packgen.h"

#include <cstring>
#include <exception>
#include <new>
#include <string>

#include "packgen/checksum.hpp"
#include "packgen/config.hpp"
#include "packgen/error.hpp"
#include "packgen/evaluation.hpp"
#include "packgen/featurizer.hpp"
#include "packgen/pcap.hpp"
#include "packgen/perturbation.hpp"
#include "packgen/pipeline.hpp"

struct pg_config {
  packgen::RunConfig value;
};

struct pg_pipeline {
  packgen::Pipeline value;
};

struct pg_packet {
  packgen::RawPacket value;
};

struct pg_capture {
  packgen::PcapContents value;
};

namespace {

thread_local std::string last_error;

pg_status status_of(packgen::ErrorCode c) {
  return static_cast<pg_status>(static_cast<int>(c) + 1);
}

template <typename F>
pg_status guard(F&& f) {
  try {
    f();
    last_error.clear();
    return PG_OK;
  } catch (const packgen::Error& e) {
    last_error = e.what();
    return status_of(e.code());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return PG_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return PG_ERR_INTERNAL;
  } catch (...) {
    last_error = "unknown failure";
    return PG_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  if (!p) throw packgen::Error(packgen::ErrorCode::InvalidArgument, std::string(what) + " is NULL");
}

pg_status copy_out(const std::string& text, char* buffer, size_t size, size_t* needed) {
  if (needed) *needed = text.size() + 1;
  if (!buffer) return size == 0 ? PG_OK : PG_ERR_INVALID_ARGUMENT;
  if (size < text.size() + 1) {
    last_error = "buffer too small";
    return PG_ERR_INVALID_ARGUMENT;
  }
  std::memcpy(buffer, text.c_str(), text.size() + 1);
  return PG_OK;
}

}  // namespace

extern "C" {

const char* pg_last_error(void) { return last_error.c_str(); }

const char* pg_status_name(pg_status status) {
  if (status == PG_OK) return "ok";
  if (status == PG_ERR_INTERNAL) return "internal";
  if (status < PG_OK || status > PG_ERR_INTERNAL) return "unknown";
  return packgen::to_string(static_cast<packgen::ErrorCode>(status - 1)).data();
}

const char* pg_version(void) { return "1.0.0"; }

pg_status pg_config_preset(const char* preset, pg_config** out) {
  return guard([&] {
    need(preset, "preset");
    need(out, "out");
    *out = new pg_config{packgen::preset(preset)};
  });
}

pg_status pg_config_load(const char* path, pg_config** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new pg_config{packgen::load_config(path)};
  });
}

pg_status pg_config_set(pg_config* config, const char* key, const char* value) {
  return guard([&] {
    need(config, "config");
    need(key, "key");
    need(value, "value");
    packgen::set_config_value(config->value, key, value);
  });
}

pg_status pg_config_validate(const pg_config* config) {
  return guard([&] {
    need(config, "config");
    config->value.validate();
  });
}

pg_status pg_config_hash(const pg_config* config, char* buffer, size_t size, size_t* needed) {
  std::string text;
  const auto st = guard([&] {
    need(config, "config");
    text = config->value.hash();
  });
  return st == PG_OK ? copy_out(text, buffer, size, needed) : st;
}

pg_status pg_config_dump(const pg_config* config, char* buffer, size_t size, size_t* needed) {
  std::string text;
  const auto st = guard([&] {
    need(config, "config");
    const auto j = config->value.to_json();
    for (const auto& [key, value] : j.items()) {
      const auto v = value.get<std::string>();
      text += (v.empty() ? "# " + key + " =" : key + " = " + v) + "\n";
    }
  });
  return st == PG_OK ? copy_out(text, buffer, size, needed) : st;
}

pg_status pg_config_schema(char* buffer, size_t size, size_t* needed) {
  std::string text;
  for (const auto& [key, desc] : packgen::config_schema()) text += key + "\t" + desc + "\n";
  return copy_out(text, buffer, size, needed);
}

void pg_config_free(pg_config* config) { delete config; }

pg_status pg_pipeline_open(const pg_config* config, const char* out_dir, int force, pg_log_fn log, void* log_user,
                           pg_pipeline** out) {
  return guard([&] {
    need(config, "config");
    need(out, "out");
    std::filesystem::path dir;
    if (out_dir && *out_dir) dir = out_dir;
    else if (config->value.out) dir = *config->value.out;
    else throw packgen::Error(packgen::ErrorCode::Config, "no output directory given (set --out or out = ...)");
    packgen::PipelineOptions opts;
    opts.out = dir;
    opts.force = force != 0;
    if (log) opts.log = [log, log_user](const std::string& m) { log(m.c_str(), log_user); };
    *out = new pg_pipeline{packgen::Pipeline(config->value, std::move(opts))};
  });
}

pg_status pg_pipeline_run(pg_pipeline* pipeline, const char* stage) {
  return guard([&] {
    need(pipeline, "pipeline");
    need(stage, "stage");
    const auto s = packgen::parse_stage(stage);
    if (!s) throw packgen::Error(packgen::ErrorCode::InvalidArgument, std::string("unknown stage ") + stage);
    pipeline->value.run(*s);
  });
}

pg_status pg_pipeline_gen_synthetic(pg_pipeline* pipeline) {
  return guard([&] {
    need(pipeline, "pipeline");
    pipeline->value.generate_synthetic();
  });
}

pg_status pg_pipeline_train_agent(pg_pipeline* pipeline, const char* attack_class) {
  return guard([&] {
    need(pipeline, "pipeline");
    need(attack_class, "attack_class");
    const auto c = packgen::parse_attack_class(attack_class);
    if (!c) throw packgen::Error(packgen::ErrorCode::InvalidArgument, std::string("unknown attack class ") + attack_class);
    pipeline->value.train_agent(*c);
  });
}

pg_status pg_pipeline_verify(pg_pipeline* pipeline, pg_log_fn report, void* user, size_t* issues) {
  return guard([&] {
    need(pipeline, "pipeline");
    const auto found = pipeline->value.verify();
    if (report)
      for (const auto& i : found) report(i.c_str(), user);
    if (issues) *issues = found.size();
  });
}

void pg_pipeline_close(pg_pipeline* pipeline) { delete pipeline; }

pg_status pg_capture_open(const char* path, pg_capture** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new pg_capture{packgen::parse_pcap(path)};
  });
}

size_t pg_capture_count(const pg_capture* capture) { return capture ? capture->value.packets.size() : 0; }

void pg_capture_stats(const pg_capture* capture, size_t stats[6]) {
  if (!capture || !stats) return;
  const auto& s = capture->value.stats;
  const size_t v[6]{s.records, s.accepted, s.skipped_non_tcp, s.skipped_truncated, s.skipped_malformed,
                    s.checksum_flagged};
  std::memcpy(stats, v, sizeof v);
}

pg_status pg_capture_packet(const pg_capture* capture, size_t index, pg_packet** out) {
  return guard([&] {
    need(capture, "capture");
    need(out, "out");
    if (index >= capture->value.packets.size())
      throw packgen::Error(packgen::ErrorCode::InvalidArgument, "packet index out of range");
    *out = new pg_packet{capture->value.packets[index]};
  });
}

void pg_capture_free(pg_capture* capture) { delete capture; }

pg_status pg_write_pcap(const char* path, const pg_packet* const* packets, size_t count) {
  return guard([&] {
    need(path, "path");
    if (count) need(packets, "packets");
    std::vector<packgen::RawPacket> raw;
    for (size_t i = 0; i < count; ++i) {
      need(packets[i], "packet");
      raw.push_back(packets[i]->value);
    }
    packgen::write_pcap(path, raw);
  });
}

pg_status pg_packet_from_frame(const uint8_t* frame, size_t length, pg_packet** out) {
  return guard([&] {
    need(frame, "frame");
    need(out, "out");
    packgen::RawPacket p;
    const auto st = packgen::parse_frame({frame, length}, p);
    if (st != packgen::FrameStatus::Accepted)
      throw packgen::Error(packgen::ErrorCode::UnsupportedFormat, "frame is not a well-formed TCP/IPv4 packet");
    p.orig_len = static_cast<std::uint32_t>(length);
    *out = new pg_packet{std::move(p)};
  });
}

pg_status pg_packet_serialize(const pg_packet* packet, uint8_t* buffer, size_t size, size_t* needed) {
  std::vector<std::uint8_t> bytes;
  const auto st = guard([&] {
    need(packet, "packet");
    bytes = packet->value.serialize();
  });
  if (st != PG_OK) return st;
  if (needed) *needed = bytes.size();
  if (!buffer) return PG_OK;
  if (size < bytes.size()) {
    last_error = "buffer too small";
    return PG_ERR_INVALID_ARGUMENT;
  }
  std::memcpy(buffer, bytes.data(), bytes.size());
  return PG_OK;
}

int pg_packet_validate(const pg_packet* packet) {
  try {
    return packet && packgen::validate(packet->value) ? 1 : 0;
  } catch (...) {
    return 0;
  }
}

pg_status pg_packet_featurize(const pg_packet* packet, uint8_t features[PG_FEATURE_COUNT]) {
  return guard([&] {
    need(packet, "packet");
    need(features, "features");
    const auto v = packgen::defeaturize_sync(packet->value);
    std::memcpy(features, v.bytes().data(), PG_FEATURE_COUNT);
  });
}

pg_status pg_packet_recompute_checksums(pg_packet* packet) {
  return guard([&] {
    need(packet, "packet");
    packgen::recompute_checksums(packet->value);
  });
}

pg_status pg_packet_apply(const pg_packet* packet, int action_id, const uint8_t* corpus, size_t corpus_length,
                          size_t chunk, size_t* cursor, pg_packet** out, int* changed) {
  return guard([&] {
    need(packet, "packet");
    need(out, "out");
    const auto a = packgen::action_from_id(action_id);
    if (!a) throw packgen::Error(packgen::ErrorCode::InvalidArgument, "action id out of range");
    packgen::ApplyResult r;
    if (*a == packgen::ActionKind::PayloadAppend && corpus && cursor) {
      packgen::AppendContext ctx{{corpus, corpus_length}, chunk ? chunk : packgen::kDefaultPayloadChunk, *cursor};
      r = packgen::apply(packet->value, *a, &ctx);
      *cursor = ctx.cursor;
    } else {
      r = packgen::apply(packet->value, *a);
    }
    if (changed) *changed = r.changed ? 1 : 0;
    *out = new pg_packet{std::move(r.packet)};
  });
}

void pg_packet_free(pg_packet* packet) { delete packet; }

const char* pg_action_name(int action_id) {
  const auto a = packgen::action_from_id(action_id);
  return a ? packgen::to_string(*a).data() : nullptr;
}

uint16_t pg_checksum16(const uint8_t* data, size_t length) {
  if (!data && length) return 0;
  return packgen::checksum16({data, length});
}

pg_status pg_asr(size_t tp, size_t fn_original, size_t fn_p, double* out) {
  return guard([&] {
    need(out, "out");
    *out = packgen::asr(tp, fn_original, fn_p);
  });
}

pg_status pg_ks_two_sample(const double* x, size_t n, const double* y, size_t m, double alpha, double* d, int* reject) {
  return guard([&] {
    need(x, "x");
    need(y, "y");
    const auto r = packgen::ks_two_sample({x, n}, {y, m}, alpha);
    if (d) *d = r.d;
    if (reject) *reject = r.reject ? 1 : 0;
  });
}

}  // extern "C"
