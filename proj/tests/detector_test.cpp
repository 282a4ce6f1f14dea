#include <doctest.h>
TEST_SUITE("detector") {}
