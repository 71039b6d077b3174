const fs = require("fs");

const path = process.argv[2];
const text = fs.readFileSync(path, "utf8");
try {
  console.log(JSON.stringify(JSON.parse(text), null, 2));
} catch (err) {
  console.error(`invalid JSON: ${err.message}`);
  process.exitCode = 1;
}
