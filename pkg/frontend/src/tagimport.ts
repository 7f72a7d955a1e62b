/** Client-side tag pack reader for visual overlays.
 * Accepts the block-mapping subset of YAML that tag packs actually use:
 * header scalars, one `tags:` list of flat mappings, comments, and quoted
 * or plain scalar values. Header fields are inherited by every tag and
 * overridable per tag; imported tags never leave the client. */

export class TagImportError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "TagImportError";
  }
}

export interface ImportedTag {
  address: string;
  label: string;
  currency?: string;
  source?: string;
  category?: string;
  abuse?: string;
  lastmod?: string;
}

export interface ImportedPack {
  title: string;
  creator: string;
  lastmod: string;
  tags: ImportedTag[];
}

const INHERITABLE_FIELDS = ["label", "source", "category", "abuse", "currency", "lastmod"];
const HEADER_FIELDS = ["title", "creator", "lastmod", "tags", ...INHERITABLE_FIELDS];
const TAG_FIELDS = ["address", ...INHERITABLE_FIELDS];
const MANDATORY_HEADER = ["title", "creator", "lastmod"];

interface ParsedLine {
  lineNo: number;
  indent: number;
  isItem: boolean;
  key: string;
  value: string;
}

export function parseTagPack(text: string): ImportedPack {
  const lines = tokenize(text);
  const header = new Map<string, string>();
  const rawTags: Map<string, string>[] = [];
  let sawTags = false;
  let inTags = false;
  let itemIndent = -1;
  let current: Map<string, string> | null = null;

  for (const line of lines) {
    if (line.isItem) {
      if (!inTags) {
        throw new TagImportError(`line ${line.lineNo}: list item outside tags`);
      }
      if (itemIndent === -1) {
        itemIndent = line.indent;
      } else if (line.indent !== itemIndent) {
        throw new TagImportError(`line ${line.lineNo}: inconsistent list indentation`);
      }
      current = new Map();
      rawTags.push(current);
      setTagField(current, line);
      continue;
    }
    if (line.indent === 0) {
      inTags = false;
      current = null;
      if (!HEADER_FIELDS.includes(line.key)) {
        throw new TagImportError(`line ${line.lineNo}: unknown field '${line.key}'`);
      }
      if (line.key === "tags") {
        if (line.value !== "") {
          throw new TagImportError(`line ${line.lineNo}: tags must be a block list`);
        }
        if (sawTags) {
          throw new TagImportError(`line ${line.lineNo}: duplicate field 'tags'`);
        }
        sawTags = true;
        inTags = true;
        continue;
      }
      if (header.has(line.key)) {
        throw new TagImportError(`line ${line.lineNo}: duplicate field '${line.key}'`);
      }
      if (line.value === "") {
        throw new TagImportError(`line ${line.lineNo}: missing value for '${line.key}'`);
      }
      header.set(line.key, line.value);
      continue;
    }
    if (current === null || line.indent <= itemIndent) {
      throw new TagImportError(`line ${line.lineNo}: unexpected indentation`);
    }
    setTagField(current, line);
  }

  for (const field of MANDATORY_HEADER) {
    if (!header.has(field)) {
      throw new TagImportError(`missing mandatory field '${field}'`);
    }
  }
  if (!sawTags) {
    throw new TagImportError("missing tags list");
  }

  const defaults = new Map(
    INHERITABLE_FIELDS.filter((f) => header.has(f)).map((f) => [f, header.get(f) as string]),
  );
  const tags = rawTags.map((raw, index) => {
    const merged = new Map(defaults);
    for (const [key, value] of raw) {
      merged.set(key, value);
    }
    const address = merged.get("address");
    const label = merged.get("label");
    if (address === undefined) {
      throw new TagImportError(`tag ${index + 1}: missing address`);
    }
    if (label === undefined) {
      throw new TagImportError(`tag ${index + 1}: missing label`);
    }
    const tag: ImportedTag = { address, label };
    for (const field of ["currency", "source", "category", "abuse", "lastmod"] as const) {
      const value = merged.get(field);
      if (value !== undefined) {
        tag[field] = value;
      }
    }
    return tag;
  });

  return {
    title: header.get("title") as string,
    creator: header.get("creator") as string,
    lastmod: header.get("lastmod") as string,
    tags,
  };
}

function setTagField(target: Map<string, string>, line: ParsedLine): void {
  if (!TAG_FIELDS.includes(line.key)) {
    throw new TagImportError(`line ${line.lineNo}: unknown field '${line.key}'`);
  }
  if (target.has(line.key)) {
    throw new TagImportError(`line ${line.lineNo}: duplicate field '${line.key}'`);
  }
  if (line.value === "") {
    throw new TagImportError(`line ${line.lineNo}: missing value for '${line.key}'`);
  }
  target.set(line.key, line.value);
}

function tokenize(text: string): ParsedLine[] {
  const out: ParsedLine[] = [];
  const lines = text.split(/\r?\n/);
  for (let i = 0; i < lines.length; i += 1) {
    const lineNo = i + 1;
    const raw = lines[i];
    if (raw.trim() === "" || raw.trim().startsWith("#")) {
      continue;
    }
    if (/^\s*\t/.test(raw)) {
      throw new TagImportError(`line ${lineNo}: tab indentation is not allowed`);
    }
    const indentMatch = raw.match(/^( *)/) as RegExpMatchArray;
    const indent = indentMatch[1].length;
    let body = raw.slice(indent);
    let isItem = false;
    if (body.startsWith("- ")) {
      isItem = true;
      body = body.slice(2);
    } else if (body === "-" || body.startsWith("-\t")) {
      throw new TagImportError(`line ${lineNo}: empty list item`);
    }
    const colon = body.indexOf(":");
    if (colon <= 0) {
      throw new TagImportError(`line ${lineNo}: expected 'key: value'`);
    }
    const key = body.slice(0, colon).trim();
    if (!/^[A-Za-z_][A-Za-z0-9_]*$/.test(key)) {
      throw new TagImportError(`line ${lineNo}: malformed key '${key}'`);
    }
    const value = parseScalar(body.slice(colon + 1).trim(), lineNo);
    out.push({ lineNo, indent, isItem, key, value });
  }
  return out;
}

function parseScalar(text: string, lineNo: number): string {
  if (text === "") {
    return "";
  }
  if (text.startsWith("[") || text.startsWith("{")) {
    throw new TagImportError(`line ${lineNo}: flow collections are not supported`);
  }
  for (const quote of ['"', "'"]) {
    if (text.startsWith(quote)) {
      if (text.length < 2 || !text.endsWith(quote)) {
        throw new TagImportError(`line ${lineNo}: unterminated quoted value`);
      }
      return text.slice(1, -1);
    }
  }
  return text;
}
