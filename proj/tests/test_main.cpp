#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "textgraph/common.hpp"

int main(int argc, char** argv) {
    textgraph::set_warnings_enabled(false);
    doctest::Context ctx(argc, argv);
    return ctx.run();
}
