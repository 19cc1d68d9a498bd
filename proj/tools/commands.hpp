#ifndef MMSLDL_TOOLS_COMMANDS_HPP
#define MMSLDL_TOOLS_COMMANDS_HPP

#include "config.hpp"

namespace mmsldl::cli {

void run_train(RunConfig cfg);
void run_eval(RunConfig cfg);
void run_decompose(RunConfig cfg);
void run_transform(RunConfig cfg);
void run_synth(RunConfig cfg);
void run_gridsearch(RunConfig cfg);

}  // namespace mmsldl::cli

#endif
