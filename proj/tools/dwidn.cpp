#include "dwidn/cli/run.hpp"

int main(int argc, char** argv)
{
    return dwidn::cli::run_command(argc, argv);
}
