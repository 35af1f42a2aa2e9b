#ifndef TEE_LEDGER_H
#define TEE_LEDGER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TlStatus {
  TL_STATUS_OK = 0,
  TL_STATUS_NULL_ARGUMENT = 1,
  TL_STATUS_INVALID_UTF8 = 2,
  TL_STATUS_INVALID_CONFIG = 3,
  TL_STATUS_RUN_FAILED = 4,
  TL_STATUS_BUFFER_TOO_SMALL = 5,
  TL_STATUS_UNKNOWN_CONTRACT = 6,
  TL_STATUS_UNKNOWN_CLIENT = 7,
  TL_STATUS_REQUEST_FAILED = 8,
  TL_STATUS_REJECTED = 9,
  TL_STATUS_PANIC = 10,
} TlStatus;

/**
 * A finished scenario run.
 */
typedef struct TlRun TlRun;

/**
 * A running system with pre-made clients.
 */
typedef struct TlSimulation TlSimulation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message. `written` receives its
 * length, or the capacity needed when `buf` is too small.
 */
enum TlStatus tl_last_error(char *buf, size_t cap, size_t *written);

/**
 * Creates a system with `nodes` compute nodes and `clients` client identities.
 */
enum TlStatus tl_simulation_new(uint64_t seed,
                                uint32_t nodes,
                                uint32_t clients,
                                struct TlSimulation **out);

void tl_simulation_free(struct TlSimulation *sim);

/**
 * Deploys a token contract crediting every client with `initial`, and writes
 * its 32-byte contract id to `cid_out`.
 */
enum TlStatus tl_simulation_deploy_token(struct TlSimulation *sim,
                                         const char *label,
                                         uint64_t initial,
                                         uint8_t *cid_out);

/**
 * Moves `amount` from client `from` to client `to`; `remaining_out` receives
 * the sender's new balance.
 */
enum TlStatus tl_simulation_transfer(struct TlSimulation *sim,
                                     const uint8_t *cid,
                                     uint32_t from,
                                     uint32_t to,
                                     uint64_t amount,
                                     uint64_t *remaining_out);

enum TlStatus tl_simulation_balance(struct TlSimulation *sim,
                                    const uint8_t *cid,
                                    uint32_t client,
                                    uint64_t *balance_out);

/**
 * Number of ledger items accepted for contract `cid`.
 */
enum TlStatus tl_simulation_ledger_len(const struct TlSimulation *sim,
                                       const uint8_t *cid,
                                       size_t *len_out);

/**
 * Parses a scenario (TOML text) and runs it to completion.
 */
enum TlStatus tl_run_scenario(const char *config, struct TlRun **out);

void tl_run_free(struct TlRun *run);

/**
 * Writes 1 to `passed_out` if every audit of the run passed, else 0.
 */
enum TlStatus tl_run_passed(const struct TlRun *run, int32_t *passed_out);

/**
 * Copies the tab-delimited report.
 */
enum TlStatus tl_run_report(const struct TlRun *run, char *buf, size_t cap, size_t *written);

/**
 * Copies the ledger transcript accepted by [`tl_audit_transcript`].
 */
enum TlStatus tl_run_transcript(const struct TlRun *run, char *buf, size_t cap, size_t *written);

/**
 * Re-audits a transcript; `passed_out` is 1 when every chain is linear and attested.
 */
enum TlStatus tl_audit_transcript(const char *transcript, int32_t *passed_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TEE_LEDGER_H */
