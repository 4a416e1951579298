#include "gridstate/types.hpp"
