//! Small hand-written programs used by tests and the CLI.

/// `if (V[0]==0) V[1]=3; else V[1]=2; V[2]=2;` as a single wave with V at 100.
pub const IF_THEN_ELSE: &str = "\
const 100 -> 0(0)
wave 0
0: mov -> 1(0), 2(0), 3(0), 4(0)
1: load <.,1,?> -> 5(0)
2: add #1 -> 6(0), 7(0)
3: add #2 -> 10(0)
4: const 2 -> 11(0)
5: eq #0 -> 6(1), 7(1)
6: steer -> 12(0), 8(0) ;
7: steer -> ; 13(0), 9(0)
8: const 3 -> 12(1)
9: const 2 -> 13(1)
10: storeaddr <?,4,.>
11: storedata <?,4,.>
12: store <1,2,4>
13: store <1,3,4>
";

/// One wave: StoreAddr(64), five operations on address 64, then the data half
/// (7) after a chain of moves. A full store of 9 sits inside the queue.
pub const PARTIAL_STORE_QUEUE: &str = "\
const 64 -> 0(0)
const 7 -> 1(0)
wave 0
0: mov -> 2(0), 3(0), 4(0), 5(0), 6(0), 7(0), 8(0)
1: mov -> 9(0)
2: storeaddr <.,1,2>
3: load <1,2,3> -> 16(0)
4: store <2,3,4>
5: load <3,4,5> -> 17(0)
6: load <4,5,6> -> 18(0)
7: load <5,6,.> -> 19(0)
8: const 9 -> 4(1)
9: mov -> 10(0)
10: mov -> 11(0)
11: mov -> 12(0)
12: mov -> 13(0)
13: mov -> 14(0)
14: mov -> 15(0)
15: storedata <.,1,2>
16: output
17: output
18: output
19: output
";
