/* Exercises the C surface only; built as C to keep the header honest. */
#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "packgen/packgen.h"

static int failures = 0;

#define EXPECT(cond)                                                \
  do {                                                              \
    if (!(cond)) {                                                  \
      fprintf(stderr, "%s:%d: expected %s\n", __FILE__, __LINE__, #cond); \
      ++failures;                                                   \
    }                                                               \
  } while (0)

static const uint8_t syn_frame[60] = {
    0x00, 0x0c, 0x29, 0x3e, 0x5b, 0x01, 0x00, 0x50, 0x56, 0xc0, 0x00, 0x08, 0x08, 0x00, 0x45, 0x00, 0x00, 0x2c, 0x1c, 0x46,
    0x40, 0x00, 0x40, 0x06, 0x00, 0x00, 0x0a, 0x00, 0x00, 0x05, 0x0a, 0x00, 0x00, 0x09, 0x11, 0x5c, 0x00, 0x50, 0x01, 0x02,
    0x03, 0x04, 0x00, 0x00, 0x00, 0x00, 0x60, 0x02, 0xfa, 0xf0, 0x00, 0x00, 0x00, 0x00, 0x02, 0x04, 0x05, 0xb4, 0, 0};

static void count_lines(const char* message, void* user) {
  (void)message;
  ++*(int*)user;
}

int main(void) {
  const uint8_t words[8] = {0x00, 0x01, 0xF2, 0x03, 0xF4, 0xF5, 0xF6, 0xF7};
  EXPECT(pg_checksum16(words, 8) == 0x220D);

  double v = -1.0;
  EXPECT(pg_asr(100, 10, 50, &v) == PG_OK && fabs(v - 0.4) < 1e-15);
  EXPECT(pg_asr(0, 0, 0, &v) == PG_ERR_UNDEFINED_METRIC);
  EXPECT(strlen(pg_last_error()) > 0);
  EXPECT(strcmp(pg_status_name(PG_ERR_UNDEFINED_METRIC), "undefined_metric") == 0);

  double x[3] = {0, 0, 0}, y[2] = {1, 1}, d = 0;
  int reject = 0;
  EXPECT(pg_ks_two_sample(x, 3, y, 2, 0.05, &d, &reject) == PG_OK && d == 1.0);
  EXPECT(pg_ks_two_sample(x, 0, y, 2, 0.05, &d, &reject) == PG_ERR_INVALID_ARGUMENT);

  pg_packet* p = NULL;
  EXPECT(pg_packet_from_frame(syn_frame, sizeof syn_frame, &p) == PG_OK);
  EXPECT(pg_packet_validate(p) == 0); /* checksums are still zero */
  EXPECT(pg_packet_recompute_checksums(p) == PG_OK);
  EXPECT(pg_packet_validate(p) == 1);

  uint8_t features[PG_FEATURE_COUNT];
  EXPECT(pg_packet_featurize(p, features) == PG_OK);
  EXPECT(features[8] == 64);
  EXPECT(features[PG_FEATURE_COUNT - 1] == 0);

  pg_packet* q = NULL;
  int changed = 0;
  EXPECT(pg_packet_apply(p, 2, NULL, 0, 0, NULL, &q, &changed) == PG_OK && changed == 1);
  EXPECT(pg_packet_validate(q) == 1);
  EXPECT(strcmp(pg_action_name(2), "TtlInc") == 0);
  EXPECT(pg_action_name(PG_ACTION_COUNT) == NULL);
  EXPECT(pg_packet_apply(p, 99, NULL, 0, 0, NULL, &q, &changed) == PG_ERR_INVALID_ARGUMENT);

  size_t needed = 0;
  EXPECT(pg_packet_serialize(q, NULL, 0, &needed) == PG_OK && needed == 60);
  uint8_t frame[60];
  EXPECT(pg_packet_serialize(q, frame, sizeof frame, &needed) == PG_OK && frame[22] == 65);

  const char* path = "capi_roundtrip.pcap";
  const pg_packet* both[2] = {p, q};
  EXPECT(pg_write_pcap(path, both, 2) == PG_OK);
  pg_capture* cap = NULL;
  EXPECT(pg_capture_open(path, &cap) == PG_OK);
  EXPECT(pg_capture_count(cap) == 2);
  size_t stats[6];
  pg_capture_stats(cap, stats);
  EXPECT(stats[0] == 2 && stats[1] == 2);
  pg_capture_free(cap);
  remove(path);
  EXPECT(pg_capture_open("does-not-exist.pcap", &cap) != PG_OK);

  pg_config* cfg = NULL;
  EXPECT(pg_config_preset("desk", &cfg) == PG_OK);
  EXPECT(pg_config_set(cfg, "agent.episodes", "10") == PG_OK);
  EXPECT(pg_config_set(cfg, "agent.epsiodes", "10") == PG_ERR_CONFIG);
  EXPECT(pg_config_validate(cfg) == PG_OK);
  char hash[80];
  EXPECT(pg_config_hash(cfg, hash, sizeof hash, &needed) == PG_OK && strlen(hash) == 64);
  char tiny[4];
  EXPECT(pg_config_dump(cfg, tiny, sizeof tiny, &needed) == PG_ERR_INVALID_ARGUMENT && needed > 100);
  char* dump = malloc(needed);
  EXPECT(pg_config_dump(cfg, dump, needed, NULL) == PG_OK && strstr(dump, "agent.episodes = 10") != NULL);
  free(dump);

  pg_pipeline* pipe = NULL;
  EXPECT(pg_pipeline_open(cfg, NULL, 0, NULL, NULL, &pipe) == PG_ERR_CONFIG);
  EXPECT(pg_pipeline_open(cfg, "capi_run", 0, NULL, NULL, &pipe) == PG_OK);
  EXPECT(pg_pipeline_run(pipe, "evaluate") == PG_ERR_MISSING_ARTIFACT);
  EXPECT(pg_pipeline_run(pipe, "bogus") == PG_ERR_INVALID_ARGUMENT);
  int lines = 0;
  size_t issues = 99;
  EXPECT(pg_pipeline_verify(pipe, count_lines, &lines, &issues) == PG_OK);
  EXPECT(issues == (size_t)lines);
  pg_pipeline_close(pipe);
  pg_config_free(cfg);

  pg_packet_free(p);
  pg_packet_free(q);
  EXPECT(pg_version() != NULL);

  if (failures) fprintf(stderr, "%d failure(s)\n", failures);
  return failures ? 1 : 0;
}
