// SPDX-License-Identifier: Apache-2.0
#include "lhg/cli.hpp"

int main(int argc, char** argv) { return lhg::run(argc, argv); }
