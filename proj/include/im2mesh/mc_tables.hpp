#pragma once

namespace im2mesh {

// Classic 256-case marching cubes tables. Corner i of a cell has offsets
// 0:(0,0,0) 1:(1,0,0) 2:(1,1,0) 3:(0,1,0) 4:(0,0,1) 5:(1,0,1) 6:(1,1,1)
// 7:(0,1,1); edges 0-3 ring the bottom face, 4-7 the top, 8-11 go up.
// Case bit i is set when the value at corner i is below the iso level.
extern const int kMcEdgeTable[256];
extern const int kMcTriTable[256][16];

// Edge endpoints as corner indices.
constexpr int kMcEdgeCorners[12][2] = {
    {0, 1}, {1, 2}, {2, 3}, {3, 0},
    {4, 5}, {5, 6}, {6, 7}, {7, 4},
    {0, 4}, {1, 5}, {2, 6}, {3, 7},
};

constexpr int kMcCornerOffset[8][3] = {
    {0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
    {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1},
};

}  // namespace im2mesh
