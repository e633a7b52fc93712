#include "cli_app.hpp"

int main(int argc, char** argv) { return vida::run_cli({argv, argv + argc}); }
