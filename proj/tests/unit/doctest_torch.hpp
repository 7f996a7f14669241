#pragma once

// c10 logging defines its own CHECK; doctest's must win in test code.
#undef CHECK
#include <doctest.h>
