#ifndef PACKGEN_PACKGEN_H
#define PACKGEN_PACKGEN_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define PG_API __declspec(dllexport)
#else
#define PG_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pg_status {
  PG_OK = 0,
  PG_ERR_INVALID_ARGUMENT = 1,
  PG_ERR_UNSUPPORTED_FORMAT = 2,
  PG_ERR_CONFIG = 3,
  PG_ERR_MISSING_ARTIFACT = 4,
  PG_ERR_TRAINING = 5,
  PG_ERR_IO = 6,
  PG_ERR_UNDEFINED_METRIC = 7,
  PG_ERR_ALREADY_EXISTS = 8,
  PG_ERR_SPLIT_OVERLAP = 9,
  PG_ERR_INTERNAL = 10
} pg_status;

#define PG_FEATURE_COUNT 1525
#define PG_ACTION_COUNT 13

typedef struct pg_config pg_config;
typedef struct pg_pipeline pg_pipeline;
typedef struct pg_packet pg_packet;
typedef struct pg_capture pg_capture;

typedef void (*pg_log_fn)(const char* message, void* user);

/* Message of the last failure on the calling thread; never NULL. */
PG_API const char* pg_last_error(void);
PG_API const char* pg_status_name(pg_status status);
PG_API const char* pg_version(void);

/* Configuration. `preset` is "desk" or "full". */
PG_API pg_status pg_config_preset(const char* preset, pg_config** out);
PG_API pg_status pg_config_load(const char* path, pg_config** out);
PG_API pg_status pg_config_set(pg_config* config, const char* key, const char* value);
PG_API pg_status pg_config_validate(const pg_config* config);
/* Writes a NUL-terminated string; `*needed` gets the full length plus one. */
PG_API pg_status pg_config_hash(const pg_config* config, char* buffer, size_t size, size_t* needed);
/* Effective configuration as `key = value` lines that load back unchanged. */
PG_API pg_status pg_config_dump(const pg_config* config, char* buffer, size_t size, size_t* needed);
/* Newline-separated "key<TAB>description" lines. */
PG_API pg_status pg_config_schema(char* buffer, size_t size, size_t* needed);
PG_API void pg_config_free(pg_config* config);

/* Pipeline over one output directory. The config is copied. */
PG_API pg_status pg_pipeline_open(const pg_config* config, const char* out_dir, int force, pg_log_fn log,
                                  void* log_user, pg_pipeline** out);
/* stage: "ingest", "classify", "train", "evaluate" or "all". */
PG_API pg_status pg_pipeline_run(pg_pipeline* pipeline, const char* stage);
PG_API pg_status pg_pipeline_gen_synthetic(pg_pipeline* pipeline);
PG_API pg_status pg_pipeline_train_agent(pg_pipeline* pipeline, const char* attack_class);
/* Each problem found is passed to `report`; `*issues` receives the count. */
PG_API pg_status pg_pipeline_verify(pg_pipeline* pipeline, pg_log_fn report, void* user, size_t* issues);
PG_API void pg_pipeline_close(pg_pipeline* pipeline);

/* Capture files. Only accepted TCP/IPv4 packets are kept. */
PG_API pg_status pg_capture_open(const char* path, pg_capture** out);
PG_API size_t pg_capture_count(const pg_capture* capture);
/* records, accepted, non-TCP, truncated, malformed, checksum-flagged */
PG_API void pg_capture_stats(const pg_capture* capture, size_t stats[6]);
PG_API pg_status pg_capture_packet(const pg_capture* capture, size_t index, pg_packet** out);
PG_API void pg_capture_free(pg_capture* capture);
PG_API pg_status pg_write_pcap(const char* path, const pg_packet* const* packets, size_t count);

/* Packets */
PG_API pg_status pg_packet_from_frame(const uint8_t* frame, size_t length, pg_packet** out);
PG_API pg_status pg_packet_serialize(const pg_packet* packet, uint8_t* buffer, size_t size, size_t* needed);
PG_API int pg_packet_validate(const pg_packet* packet);
PG_API pg_status pg_packet_featurize(const pg_packet* packet, uint8_t features[PG_FEATURE_COUNT]);
PG_API pg_status pg_packet_recompute_checksums(pg_packet* packet);
/* Applies action `action_id` (0..12). The corpus and cursor are only used by
 * the payload-append action; `cursor` may be NULL otherwise. */
PG_API pg_status pg_packet_apply(const pg_packet* packet, int action_id, const uint8_t* corpus, size_t corpus_length,
                                 size_t chunk, size_t* cursor, pg_packet** out, int* changed);
PG_API void pg_packet_free(pg_packet* packet);
PG_API const char* pg_action_name(int action_id);

/* Metrics */
PG_API uint16_t pg_checksum16(const uint8_t* data, size_t length);
PG_API pg_status pg_asr(size_t tp, size_t fn_original, size_t fn_p, double* out);
PG_API pg_status pg_ks_two_sample(const double* x, size_t n, const double* y, size_t m, double alpha, double* d,
                                  int* reject);

#ifdef __cplusplus
}
#endif

#endif
