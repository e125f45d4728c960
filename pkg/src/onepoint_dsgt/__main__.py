from onepoint_dsgt.cli import main

raise SystemExit(main())
