#ifndef APPTRAFFIC_H
#define APPTRAFFIC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum ApptrafficStatus {
  APPTRAFFIC_STATUS_OK = 0,
  APPTRAFFIC_STATUS_NULL_ARGUMENT = 1,
  APPTRAFFIC_STATUS_INVALID_UTF8 = 2,
  APPTRAFFIC_STATUS_IO = 3,
  APPTRAFFIC_STATUS_PARSE = 4,
  APPTRAFFIC_STATUS_OUT_OF_RANGE = 5,
  APPTRAFFIC_STATUS_INVALID_ARGUMENT = 6,
  APPTRAFFIC_STATUS_PANIC = 7,
} ApptrafficStatus;

typedef enum ApptrafficTransport {
  APPTRAFFIC_TRANSPORT_TCP = 6,
  APPTRAFFIC_TRANSPORT_UDP = 17,
} ApptrafficTransport;

typedef enum ApptrafficProtocol {
  APPTRAFFIC_PROTOCOL_HTTP = 0,
  APPTRAFFIC_PROTOCOL_DO53 = 1,
  APPTRAFFIC_PROTOCOL_DOT = 2,
  APPTRAFFIC_PROTOCOL_TLS = 3,
  APPTRAFFIC_PROTOCOL_QUIC = 4,
  APPTRAFFIC_PROTOCOL_OTHER_TCP = 5,
  APPTRAFFIC_PROTOCOL_OTHER_UDP = 6,
} ApptrafficProtocol;

/**
 * `None` for protocols that carry no TLS version.
 */
typedef enum ApptrafficTlsVersion {
  APPTRAFFIC_TLS_VERSION_NONE = 0,
  APPTRAFFIC_TLS_VERSION_UNKNOWN_SSL = 1,
  APPTRAFFIC_TLS_VERSION_SSLV2 = 2,
  APPTRAFFIC_TLS_VERSION_SSLV3 = 3,
  APPTRAFFIC_TLS_VERSION_TLS10 = 4,
  APPTRAFFIC_TLS_VERSION_TLS11 = 5,
  APPTRAFFIC_TLS_VERSION_TLS12 = 6,
  APPTRAFFIC_TLS_VERSION_TLS13 = 7,
} ApptrafficTlsVersion;

/**
 * A decoded and classified capture.
 */
typedef struct ApptrafficCapture ApptrafficCapture;

/**
 * Parsed NSS key log.
 */
typedef struct ApptrafficKeyIndex ApptrafficKeyIndex;

typedef struct ApptrafficPacketInfo {
  uint64_t ts_ns;
  uint32_t packet_len;
  uint32_t payload_len;
  uint16_t src_port;
  uint16_t dst_port;
  enum ApptrafficTransport transport;
  enum ApptrafficProtocol protocol;
  enum ApptrafficTlsVersion tls_version;
  bool is_app_data;
} ApptrafficPacketInfo;

typedef struct ApptrafficCoverage {
  uint64_t tls_flows;
  uint64_t flows_with_client_hello;
  uint64_t flows_without_client_hello;
  uint64_t flows_with_keys;
  double coverage_fraction;
} ApptrafficCoverage;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into this library from the same thread.
 */
const char *apptraffic_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *apptraffic_version(void);

/**
 * Reads, decodes and classifies a pcap file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum ApptrafficStatus apptraffic_capture_open(const char *path, struct ApptrafficCapture **out);

/**
 * Decodes and classifies an in-memory pcap file.
 *
 * # Safety
 * `data` must point to `len` readable bytes and `out` be a valid pointer.
 */
enum ApptrafficStatus apptraffic_capture_from_bytes(const uint8_t *data,
                                                    size_t len,
                                                    struct ApptrafficCapture **out);

/**
 * # Safety
 * `capture` must come from `apptraffic_capture_open*` and not be used again.
 */
void apptraffic_capture_free(struct ApptrafficCapture *capture);

/**
 * Number of TCP/UDP packets, plus frames skipped (non-IP, fragments...) and
 * malformed frames.
 *
 * # Safety
 * `capture` must be a live handle; out-pointers may be null to ignore.
 */
enum ApptrafficStatus apptraffic_capture_counts(const struct ApptrafficCapture *capture,
                                                uint64_t *packets,
                                                uint64_t *skipped,
                                                uint64_t *malformed);

/**
 * Classification of packet `index` (capture order).
 *
 * # Safety
 * `capture` must be a live handle and `out` a valid pointer.
 */
enum ApptrafficStatus apptraffic_capture_packet(const struct ApptrafficCapture *capture,
                                                size_t index,
                                                struct ApptrafficPacketInfo *out);

/**
 * Packets in a distribution bucket such as ("TCP", "TLSv1.3") or ("UDP", "Do53").
 *
 * # Safety
 * `capture` must be a live handle, `category` a NUL-terminated string and
 * `out` a valid pointer.
 */
enum ApptrafficStatus apptraffic_capture_category_count(const struct ApptrafficCapture *capture,
                                                        enum ApptrafficTransport transport,
                                                        const char *category,
                                                        bool app_data_only,
                                                        uint64_t *out);

/**
 * JSON object with the protocol distribution and temporal histogram.
 * Release the string with `apptraffic_string_free`.
 *
 * # Safety
 * `capture` must be a live handle and `out` a valid pointer.
 */
enum ApptrafficStatus apptraffic_capture_summary_json(const struct ApptrafficCapture *capture,
                                                      bool app_data_only,
                                                      double bin_width_s,
                                                      char **out);

/**
 * # Safety
 * `s` must come from this library and not be used again.
 */
void apptraffic_string_free(char *s);

/**
 * Parses NSS key log text. Malformed lines are counted, not fatal.
 *
 * # Safety
 * `text` must point to `len` readable bytes and `out` be a valid pointer.
 */
enum ApptrafficStatus apptraffic_keylog_parse(const uint8_t *text,
                                              size_t len,
                                              struct ApptrafficKeyIndex **out);

/**
 * # Safety
 * `index` must be a live handle; out-pointers may be null to ignore.
 */
enum ApptrafficStatus apptraffic_keylog_counts(const struct ApptrafficKeyIndex *index,
                                               uint64_t *entries,
                                               uint64_t *malformed_lines);

/**
 * # Safety
 * `index` must come from `apptraffic_keylog_parse` and not be used again.
 */
void apptraffic_keylog_free(struct ApptrafficKeyIndex *index);

/**
 * Share of the capture's TLS flows with a ClientHello whose random is logged.
 *
 * # Safety
 * Both handles must be live and `out` a valid pointer.
 */
enum ApptrafficStatus apptraffic_key_coverage(const struct ApptrafficCapture *capture,
                                              const struct ApptrafficKeyIndex *index,
                                              struct ApptrafficCoverage *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* APPTRAFFIC_H */
