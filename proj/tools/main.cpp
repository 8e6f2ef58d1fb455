// SPDX-License-Identifier: Apache-2.0
#include "immfm/cli.hpp"

int main(int argc, char** argv) { return immfm::cli::run(argc, argv); }
