#include "cli.h"

int main(int argc, char** argv) { return instavo::tools::Run(argc, argv); }
