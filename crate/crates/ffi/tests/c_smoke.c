#include <stdio.h>
#include <string.h>
#include "npg.h"

#define CHECK(call)                                                   \
    do {                                                              \
        NpgStatus st_ = (call);                                       \
        if (st_ != NPG_STATUS_OK) {                                   \
            fprintf(stderr, "%s -> %d: %s\n", #call, (int)st_,        \
                    npg_last_error());                                \
            return 1;                                                 \
        }                                                             \
    } while (0)

int main(void) {
    NpgModel *model = NULL;
    NpgMdp *mdp = NULL;
    NpgPolicy *pi0 = NULL, *pi = NULL;
    size_t states = 0, actions = 0;
    double eps = 0.0, j0 = 0.0, j = 0.0, jstar = 0.0;

    CHECK(npg_model_preset("single-queue", 0.0, &model));
    CHECK(npg_model_capacity_margin(model, &eps));
    CHECK(npg_model_truncate(model, 20, &mdp));
    CHECK(npg_mdp_shape(mdp, &states, &actions));
    CHECK(npg_policy_uniform(mdp, &pi0));
    CHECK(npg_evaluate(mdp, pi0, &j0, NULL, 0));
    CHECK(npg_run_constant_step(mdp, pi0, 50, 2.0, &pi));
    CHECK(npg_evaluate(mdp, pi, &j, NULL, 0));
    CHECK(npg_mdp_optimal_average_reward(mdp, &jstar));
    if (npg_model_preset("no-such-model", 0.0, &model) != NPG_STATUS_INVALID_ARGUMENT || strlen(npg_last_error()) == 0) {
        fprintf(stderr, "bad preset was not rejected\n");
        return 1;
    }
    printf("%zu %zu %.6f %.6f %.6f %.6f\n", states, actions, eps, j0, j, jstar);
    npg_policy_free(pi);
    npg_policy_free(pi0);
    npg_mdp_free(mdp);
    npg_model_free(model);
    return (j >= j0 && j <= jstar + 1e-9) ? 0 : 1;
}
