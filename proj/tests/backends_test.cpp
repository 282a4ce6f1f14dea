#include <doctest.h>
TEST_SUITE("backends") {}
