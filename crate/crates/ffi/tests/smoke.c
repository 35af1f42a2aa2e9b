#include <stdio.h>
#include <string.h>
#include "tee_ledger.h"

#define CHECK(expr) do { if ((expr) != TL_STATUS_OK) { \
    char msg[256]; size_t n; tl_last_error(msg, sizeof msg, &n); \
    fprintf(stderr, "%s failed: %s\n", #expr, msg); return 1; } } while (0)

int main(void) {
    TlSimulation *sim = NULL;
    uint8_t cid[32];
    uint64_t left = 0, bal = 0;
    CHECK(tl_simulation_new(5, 2, 2, &sim));
    CHECK(tl_simulation_deploy_token(sim, "c", 50, cid));
    CHECK(tl_simulation_transfer(sim, cid, 0, 1, 20, &left));
    CHECK(tl_simulation_balance(sim, cid, 1, &bal));
    if (tl_simulation_transfer(sim, cid, 0, 1, 1000, &left) != TL_STATUS_REJECTED) return 2;
    tl_simulation_free(sim);
    printf("%llu %llu\n", (unsigned long long)left, (unsigned long long)bal);
    return 0;
}
